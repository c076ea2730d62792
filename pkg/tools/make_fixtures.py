"""Regenerate the committed fixtures under src/vbunmix/data/fixtures."""
import sys

from vbunmix.fixtures import regenerate

if __name__ == "__main__":
    regenerate(sys.argv[1] if len(sys.argv) > 1 else None)
