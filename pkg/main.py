import sys

from src.services import CommandHandler

if __name__ == "__main__":
    sys.exit(CommandHandler().run())
