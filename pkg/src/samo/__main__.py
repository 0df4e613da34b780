from samo.cli import main

raise SystemExit(main())
