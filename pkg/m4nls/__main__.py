from m4nls.main import main

raise SystemExit(main())
