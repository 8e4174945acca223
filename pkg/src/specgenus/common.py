from __future__ import annotations

import csv
import enum
import json
import logging
import logging.config
import math
import numbers
from importlib import resources

import yaml

import specgenus

_trace_installed = False


def load_logging_config():
    config_file = resources.files(specgenus) / "data" / "logging_config.yml"
    return yaml.safe_load(config_file.read_text(encoding="utf-8"))


def configure_logging(handler=None):
    config = load_logging_config()
    if handler:
        config["root"]["handlers"] = [handler]
    logging.config.dictConfig(config)

    install_trace_logger()


def get_handlers():
    config = load_logging_config()
    return list(config["handlers"].keys())


def get_default_handlers():
    config = load_logging_config()
    return config["root"]["handlers"][0]


def install_trace_logger():
    global _trace_installed
    if _trace_installed:
        return
    level = logging.TRACE = logging.DEBUG - 5

    def log_logger(self, message, *args, **kwargs):
        if self.isEnabledFor(level):
            self._log(level, message, args, **kwargs)

    logging.getLoggerClass().trace = log_logger

    def log_root(msg, *args, **kwargs):
        logging.log(level, msg, *args, **kwargs)  # noqa: LOG015

    logging.addLevelName(level, "TRACE")
    logging.trace = log_root
    _trace_installed = True


def trace(logger, message, *args):
    """Log at TRACE level whether or not the level has been installed yet."""
    logger.log(logging.DEBUG - 5, message, *args)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(value) for value in row])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fp:
        reader = csv.DictReader(fp)
        return list(reader)


def format_number(value):
    if isinstance(value, (bool, str)):
        return value
    if isinstance(value, numbers.Integral):
        return str(value)
    return repr(float(value))


def jsonable(value):
    """Plain JSON types; non-finite floats become the strings "inf", "-inf" and "nan"."""
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]
    if isinstance(value, enum.Enum):
        return jsonable(value.value)
    if hasattr(value, "tolist"):
        return jsonable(value.tolist())
    if isinstance(value, (bool, str)) or value is None:
        return value
    if isinstance(value, numbers.Integral):
        return int(value)
    if isinstance(value, numbers.Real):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    return str(value)


def write_json(path, data):
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(jsonable(data), fp, sort_keys=True, indent=2)
        fp.write("\n")
