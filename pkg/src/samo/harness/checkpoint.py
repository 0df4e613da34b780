"""Binary option-set checkpoints plus a JSON sidecar for resuming runs.

Layout, all little-endian::

    b"SAMO1" | uint32 option count | uint8 discrete | float64 gamma_beta | float64 threshold
    per option: policy net fragment | float64 alpha | uint8 mature | termination net fragment
    uint32 metadata length | metadata (UTF-8 JSON)

Net fragments use the format of ``samo.nncore.write_net``.
"""
from __future__ import annotations

import io
import json
import os
import struct
from pathlib import Path

from samo.errors import ConfigError
from samo.nncore import read_net, write_net
from samo.options import Option, OptionSet, TerminationFn
from samo.policy import ActionSpace, CategoricalHead, GaussianHead

MAGIC = b"SAMO1"


def dump_option_set(option_set: OptionSet, metadata: dict | None = None) -> bytes:
    space = option_set.space
    threshold = option_set.terminations[0].threshold if option_set.k else 0.5
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IBdd", option_set.k, int(space.discrete), option_set.gamma_beta,
                          threshold))
    for opt, term in zip(option_set.options, option_set.terminations):
        write_net(buf, opt.policy.net)
        buf.write(struct.pack("<dB", opt.alpha, int(opt.mature)))
        write_net(buf, term.net)
    meta = dict(metadata or {})
    meta.setdefault("action_n", space.n)
    blob = json.dumps(meta, sort_keys=True).encode()
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    return buf.getvalue()


def load_option_set(data: bytes) -> tuple[OptionSet, dict]:
    fp = io.BytesIO(data)
    if fp.read(len(MAGIC)) != MAGIC:
        raise ConfigError("not a SAMO1 checkpoint")
    head = fp.read(struct.calcsize("<IBdd"))
    if len(head) != struct.calcsize("<IBdd"):
        raise ConfigError("truncated checkpoint header")
    count, discrete, gamma_beta, threshold = struct.unpack("<IBdd", head)
    entries = []
    for _ in range(count):
        pnet = read_net(fp, "tanh")
        tail = fp.read(9)
        if len(tail) != 9:
            raise ConfigError("truncated checkpoint option record")
        alpha, mature = struct.unpack("<dB", tail)
        tnet = read_net(fp, "tanh")
        entries.append((pnet, alpha, bool(mature), tnet))
    raw = fp.read(4)
    if len(raw) != 4:
        raise ConfigError("checkpoint metadata missing")
    (n,) = struct.unpack("<I", raw)
    blob = fp.read(n)
    if len(blob) != n:
        raise ConfigError("truncated checkpoint metadata")
    meta = json.loads(blob.decode())
    if discrete:
        space = ActionSpace("discrete", int(meta["action_n"]))
    else:
        space = ActionSpace("continuous", int(meta["action_n"]))
    option_set = OptionSet(space, gamma_beta)
    for i, (pnet, alpha, mature, tnet) in enumerate(entries, start=1):
        head = CategoricalHead(pnet) if discrete else GaussianHead(pnet)
        option_set.append(Option(head, alpha, mature), TerminationFn(tnet, space, i, threshold))
    return option_set, meta


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_checkpoint(path: str | Path, option_set: OptionSet, metadata: dict | None = None) -> None:
    _atomic_write(Path(path), dump_option_set(option_set, metadata))


def load_checkpoint(path: str | Path) -> tuple[OptionSet, dict]:
    return load_option_set(Path(path).read_bytes())


def save_state(path: str | Path, state: dict) -> None:
    _atomic_write(Path(path), json.dumps(state, sort_keys=True).encode())


def load_state(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
