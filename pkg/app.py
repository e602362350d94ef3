import sys

from dotenv import load_dotenv

from core.cli import cli_main

load_dotenv()

if __name__ == "__main__":
    sys.exit(cli_main(sys.argv[1:]))
