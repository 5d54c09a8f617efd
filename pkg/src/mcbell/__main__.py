import sys

from mcbell.cli import main

sys.exit(main())
