import sys

from kirchnorm.cli import main

sys.exit(main())
