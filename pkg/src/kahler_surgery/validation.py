"""Loading and enforcing the JSON schemas shipped under ``schemas/``."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from .errors import ConfigurationError

SCHEMA_NAMES = (
    "flow_params", "pipeline_config", "lattice_input", "schedule",
    "run", "estimates", "gh", "continuation", "pipeline",
)


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    if name not in SCHEMA_NAMES:
        raise KeyError(name)
    text = resources.files(__package__).joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc, name: str) -> None:
    """Raise ConfigurationError with the offending path when doc does not match the named schema."""
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"{name} schema violation at {where}: {exc.message}") from None


def write_json(path, doc, name: str | None = None) -> None:
    if name is not None:
        validate(doc, name)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=False)
        fh.write("\n")


def read_json(path, name: str | None = None):
    with open(path) as fh:
        doc = json.load(fh)
    if name is not None:
        validate(doc, name)
    return doc
