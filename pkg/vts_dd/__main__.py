from vts_dd.cli import main

raise SystemExit(main())
