import sys

from nlslab.cli import main

sys.exit(main())
