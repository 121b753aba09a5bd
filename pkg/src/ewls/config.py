"""TOML scenario documents.

A document is a :class:`~ewls.simulation.Scenario` written as TOML tables.
Unknown keys are rejected and every matrix is checked against the declared
dimensions.  Errors are raised as :class:`ConfigInvalid` carrying the dotted path
of the offending key (``sensors.1.R``) or the TOML line for syntax errors.
"""

from __future__ import annotations

import sys
from pathlib import Path

from pydantic import ValidationError

from .errors import ConfigInvalid
from .simulation import FieldError, Scenario

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def _format_loc(loc) -> str:
    # drop pydantic's union-branch tags such as 'sine' or 'float'
    parts = []
    for item in loc:
        if isinstance(item, int):
            parts.append(str(item))
        elif isinstance(item, str) and not item.startswith(("function-", "list[", "float", "int")):
            parts.append(item)
    return ".".join(parts)


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        return Scenario.model_validate(doc)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = _format_loc(first["loc"])
        msg = first["msg"]
        cause = first.get("ctx", {}).get("error")
        if isinstance(cause, FieldError):
            loc = f"{loc}.{cause.path}" if loc else cause.path
            msg = str(cause)
        path = loc or "<root>"
        extra = len(exc.errors()) - 1
        if extra:
            msg += f" (and {extra} more error{'s' if extra > 1 else ''})"
        raise ConfigInvalid(msg, path) from None


def parse_scenario(text: str) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"TOML syntax error: {exc}") from None
    return scenario_from_dict(doc)


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_scenario(text)


def shipped_config(name: str) -> Path:
    """Path of a bundled example config (``fig1`` or ``fig2``)."""
    path = Path(__file__).parent / "configs" / f"{name}.toml"
    if not path.exists():
        raise FileNotFoundError(path)
    return path
