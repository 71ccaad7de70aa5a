import sys

from hyperflow._cli import main

sys.exit(main())
