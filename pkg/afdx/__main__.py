from afdx.cli import main

raise SystemExit(main())
