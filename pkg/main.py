import sys

from hrl_workbench.main import main

if __name__ == "__main__":
    sys.exit(main())
