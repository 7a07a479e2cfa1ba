import sys

from mgmd_gan.cli import main

sys.exit(main())
