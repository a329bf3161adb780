import sys

from hqnrate.cli import main

sys.exit(main())
