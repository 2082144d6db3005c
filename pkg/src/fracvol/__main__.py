import sys

from fracvol.cli import main

sys.exit(main())
