import logging

from rich.logging import RichHandler

logger = logging.getLogger("zrpflux")


def configure_logging(verbose: bool = False, debug: bool = False):
    """
    Route the package logger through rich.
    :param verbose: log run milestones (INFO)
    :param debug: log everything (DEBUG), overrides verbose
    """
    if debug:
        level = logging.DEBUG
    elif verbose:
        level = logging.INFO
    else:
        level = logging.WARNING

    logger.setLevel(level)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(show_path=False, rich_tracebacks=debug)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
    logger.propagate = False
