import sys

from paperpuf.cli import main

sys.exit(main())
