import sys

from symflow.cli import main

sys.exit(main())
