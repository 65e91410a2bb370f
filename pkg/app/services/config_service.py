import logging
from typing import Any, Dict, Tuple

from pydantic import ValidationError

from app.core.exceptions import ConfigParseException, InvalidWedgeException
from app.schemas.run_schema import REQUESTS, RunRequest

logger = logging.getLogger(__name__)

LIST_KEYS = {"L_list", "T_values", "R_list"}


def parse_config(text: str) -> RunRequest:
    """
    Parse a key=value run description into a validated request.

    One `key = value` per line; `#` starts a comment; list values are comma
    separated. `command` defaults to grow. Every problem is reported with the
    line and column of the offending key or value.
    """
    values: Dict[str, Any] = {}
    positions: Dict[str, Tuple[int, int]] = {}
    key_positions: Dict[str, Tuple[int, int]] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            column = len(line) - len(line.lstrip()) + 1
            raise ConfigParseException(line_no, column, "expected key = value")
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        key_column = len(key_part) - len(key_part.lstrip()) + 1
        value_column = len(key_part) + 2 + len(value_part) - len(value_part.lstrip())
        if not key:
            raise ConfigParseException(line_no, key_column, "missing key")
        if key in values:
            raise ConfigParseException(line_no, key_column, f"duplicate key '{key}'")
        value = value_part.strip()
        if not value:
            raise ConfigParseException(line_no, value_column, f"missing value for '{key}'")
        values[key] = [v.strip() for v in value.split(",")] if key in LIST_KEYS else value
        positions[key] = (line_no, value_column)
        key_positions[key] = (line_no, key_column)

    command = values.pop("command", "grow")
    if command not in REQUESTS:
        line, column = positions.get("command", (1, 1))
        raise ConfigParseException(line, column, f"unknown command '{command}'")
    model = REQUESTS[command]
    for key in values:
        if key not in model.model_fields:
            line, column = key_positions[key]
            raise ConfigParseException(line, column, f"unknown key '{key}' for command {command}")

    try:
        request = model(command=command, **values)
    except ValidationError as e:
        error = e.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else ""
        line, column = positions.get(key, (1, 1))
        raise ConfigParseException(line, column, f"{key}: {error['msg']}")
    except InvalidWedgeException as e:
        line, column = positions.get("theta2", positions.get("theta1", (1, 1)))
        raise ConfigParseException(line, column, str(e))
    logger.debug(f"Parsed {command} request: {request.parameters()}")
    return request
