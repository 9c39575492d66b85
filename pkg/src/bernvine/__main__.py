import sys

from bernvine.cli import main

sys.exit(main())
