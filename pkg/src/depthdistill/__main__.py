import sys

from depthdistill.cli import main

sys.exit(main())
