import sys

from cli import cli


def launch_app():
    """Runs the command line and exits with its status."""
    sys.exit(cli.main())


if __name__ == "__main__":
    launch_app()
