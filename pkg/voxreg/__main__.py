import sys

from voxreg.cli import main

sys.exit(main())
