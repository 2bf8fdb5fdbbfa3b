import sys

from genuslab.cli import main

sys.exit(main())
