import sys

from hblab_app.app.main import main


if __name__ == "__main__":
    sys.exit(main())
