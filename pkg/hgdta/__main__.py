import sys

from hgdta.cli import main

sys.exit(main())
