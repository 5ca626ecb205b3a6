import sys

from pbsent.cli import main

sys.exit(main())
