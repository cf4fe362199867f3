import sys

from hsdacs.cli import main

sys.exit(main())
