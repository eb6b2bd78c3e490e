import sys

from app.views.cli import main

if __name__ == "__main__":
    sys.exit(main())
