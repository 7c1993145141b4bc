import sys

from patternflow.main import main

sys.exit(main())
