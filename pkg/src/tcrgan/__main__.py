import sys

from tcrgan.cli import main

sys.exit(main())
