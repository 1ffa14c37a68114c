import logging
import sys

_FORMAT = "[perturbmap] %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str = "WARNING") -> logging.Logger:
    root = logging.getLogger("perturbmap_toolkit")
    root.setLevel(getattr(logging, level.upper(), logging.WARNING))
    if not any(getattr(h, "_perturbmap", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(_FORMAT))
        handler._perturbmap = True
        root.addHandler(handler)
    return root
