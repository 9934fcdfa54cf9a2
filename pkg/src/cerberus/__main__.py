import sys

from cerberus.cli import main

sys.exit(main())
