"""Allow `python -m cireg` as an alternative to the installed entry point."""

from .cli import main

main()
