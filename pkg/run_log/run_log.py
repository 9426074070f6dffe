import logging
import os
import sys
import uuid
from datetime import datetime
from typing import Optional

PACKAGES = ("rate_region", "storage_sim", "main")


class ReportFormatter(logging.Formatter):
    """Renders records as report-file lines: "<date>, <time> : LEVEL \t message"."""

    def formatTime(self, record: logging.LogRecord, datefmt: Optional[str] = None) -> str:
        return datetime.fromtimestamp(record.created).strftime(datefmt or "%m/%d/%Y, %H:%M:%S.%f")

    def format(self, record: logging.LogRecord) -> str:
        entry = f"{self.formatTime(record)} : {record.levelname} \t {record.getMessage()}"
        if record.exc_info:
            entry += "\n" + self.formatException(record.exc_info)
        return entry


def report_path(report_dir: str) -> str:
    if not os.path.exists(report_dir):
        os.makedirs(report_dir)
    return os.path.join(report_dir, f"{uuid.uuid4()}.txt")


def configure_logging(verbose: bool = False, report_dir: Optional[str] = None) -> Optional[str]:
    """
    Routes the library loggers to stderr and, optionally, to a fresh report file.

    Args:
        verbose (bool): Show INFO records on stderr instead of WARNING and above only.
        report_dir (str, optional): Directory receiving a <uuid4>.txt report with every record
            down to DEBUG. Created when missing.

    Returns:
        str: Path of the report file, or None when no report directory was given.
    """
    formatter = ReportFormatter()
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if verbose else logging.WARNING)
    console.setFormatter(formatter)
    handlers = [console]

    log_path = None
    if report_dir:
        log_path = report_path(report_dir)
        report = logging.FileHandler(log_path, mode="w")
        report.setLevel(logging.DEBUG)
        report.setFormatter(formatter)
        handlers.append(report)

    for name in PACKAGES:
        logger = logging.getLogger(name)
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()
        logger.setLevel(logging.DEBUG if log_path else console.level)
        for handler in handlers:
            logger.addHandler(handler)
        logger.propagate = False
    if log_path:
        logging.getLogger("main").info("Logging report to %s", log_path)
    return log_path
