import sys

from serrinlab.cli import main

sys.exit(main())
