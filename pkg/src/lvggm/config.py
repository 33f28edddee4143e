"""Experiment configuration files (TOML) with line-anchored error messages."""

from __future__ import annotations

import re
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

# allowed keys per table; values are the accepted Python types
SCHEMA: dict[str, dict[str, tuple[type, ...]]] = {
    "synth": {
        "model": (str,), "seed": (int,), "n_samples": (int,), "ridge": (int, float),
        "min_eig": (int, float), "max_degree": (int,), "edge_prob": (int, float), "p": (int,),
        "group_sizes": (list,), "overlap": (int,), "population": (bool,),
    },
    "fit": {
        "input": (str,), "loss": (str,), "lambda": (int, float), "gamma": (int, float),
        "k": (int,), "weights": (str, list), "outer_iters": (int,), "ista_steps": (int,),
        "fw_tol": (int, float), "max_atoms": (int,), "max_fw_iters": (int,),
        "tpi_restarts": (int,), "exact_lmo": (bool,), "seed": (int,),
    },
    "baseline": {
        "lambda": (int, float), "gamma": (int, float), "loss": (str,), "iters": (int,),
    },
    "grid": {
        "lambdas": (list,), "gammas": (list,), "select": (str,), "baseline": (bool,),
        "seed": (int,), "threads": (int,),
    },
    "certify": {
        "source": (str,), "gamma": (int, float, str), "p": (int,), "k": (int,), "r": (int,),
        "seed": (int,), "jitter": (int, float), "decompose": (bool,),
    },
    "output": {"dir": (str,), "render": (bool,), "threshold": (int, float)},
}


class ConfigError(ValueError):
    """Invalid configuration; ``str()`` carries ``file:line:`` when known."""

    def __init__(self, message: str, path: str = "<config>", line: int | None = None):
        self.path, self.line = path, line
        where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + message)


def _locate(text: str, table: str, key: str | None = None) -> int | None:
    """1-based line of ``[table]`` or of ``key`` inside it."""
    current = None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        m = re.fullmatch(r"\[\s*([A-Za-z0-9_.-]+)\s*\]", line)
        if m:
            current = m.group(1)
            if key is None and current == table:
                return n
            continue
        if key is not None and current == table and re.match(rf"{re.escape(key)}\s*=", line):
            return n
    return None


def parse_config(text: str, path: str = "<config>") -> dict:
    """Parse and validate a configuration document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"\(at line (\d+), column \d+\)", msg)
        line = int(m.group(1)) if m else None
        raise ConfigError(re.sub(r"\s*\(at line.*\)", "", msg), path, line) from None
    validate(doc, text, path)
    return doc


def validate(doc: dict, text: str = "", path: str = "<config>") -> None:
    for table, body in doc.items():
        if table not in SCHEMA:
            raise ConfigError(f"unknown table [{table}]", path, _locate(text, table))
        if not isinstance(body, dict):
            raise ConfigError(f"'{table}' must be a table", path, None)
        for key, value in body.items():
            allowed = SCHEMA[table]
            if key not in allowed:
                raise ConfigError(f"unknown key '{key}' in [{table}]", path, _locate(text, table, key))
            types = allowed[key]
            if isinstance(value, bool) and bool not in types:
                ok = False
            else:
                ok = isinstance(value, types)
            if not ok:
                names = " or ".join(t.__name__ for t in types)
                raise ConfigError(f"'{table}.{key}' must be {names}, got {type(value).__name__}",
                                  path, _locate(text, table, key))


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``table.key=value`` overrides; values use TOML syntax (bare words are strings)."""
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override '{item}' is not of the form table.key=value", "<command line>")
        lhs, rhs = item.split("=", 1)
        table, key = lhs.strip().split(".", 1)
        try:
            value = tomllib.loads(f"v = {rhs.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = rhs.strip()
        doc.setdefault(table, {})[key] = value
    validate(doc, "", "<command line>")
    return doc
