"""Run configuration: flat ``key = value`` files with per-command schemas.

Precedence is flags > file > defaults. Unknown keys and unparsable values
are usage errors so a typo never silently falls back to a default. Every
command echoes its fully resolved configuration into the output directory.
"""

from .errors import UsageError

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _to_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _to_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise UsageError(f"expected an integer, got {text!r}") from None


def _to_float(text: str) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise UsageError(f"expected a number, got {text!r}") from None


_CONVERT = {"int": _to_int, "float": _to_float, "bool": _to_bool,
            "str": lambda s: s.strip()}

# One table per command: key -> (kind, default). The training keys are
# shared with `eval` because the ablation grid trains its own models.
_TRAIN_KEYS = {
    "seed": ("int", 0),
    "epochs": ("int", 40),
    "batch_size": ("int", 32),
    "lr": ("float", 2e-4),
    "beta1": ("float", 0.99),
    "beta2": ("float", 0.9),
    "eps": ("float", 1e-8),
    "clip_norm": ("float", 5.0),
    "delta": ("int", 12),
}

COMMAND_OPTIONS = {
    "gen": {
        "seed": ("int", 0),
        "scenes": ("int", 100),
        "mode": ("str", "unique"),
        "candidates": ("int", 6),
    },
    "train": dict(_TRAIN_KEYS, **{
        "lab": ("bool", True),
        "tab": ("bool", True),
        "ncab": ("bool", True),
    }),
    "eval": dict(_TRAIN_KEYS, **{
        "seeds": ("str", "0,1,2,3,4"),
    }),
    "viz": {
        "delta": ("int", 12),
    },
}


def parse_config_file(path) -> dict:
    """Read a flat config file into a {key: raw string} map.

    Blank lines and lines starting with # are skipped; everything else
    must look like ``key = value``.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(
                f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in values:
            raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def resolve_config(command: str, file_values=None, overrides=None) -> dict:
    """Merge defaults, config-file values and flag overrides for one
    command. Override values may be raw strings or already typed."""
    table = COMMAND_OPTIONS[command]
    resolved = {key: default for key, (_, default) in table.items()}
    for source, values in (("config file", file_values),
                           ("flag", overrides)):
        if not values:
            continue
        for key, value in values.items():
            if key not in table:
                raise UsageError(
                    f"unknown {source} key {key!r} for command {command!r}")
            kind = table[key][0]
            resolved[key] = (_CONVERT[kind](value)
                             if isinstance(value, str) else value)
    return resolved


def format_config(resolved: dict) -> str:
    """Render a resolved config back to the file syntax, sorted by key."""
    return "".join(f"{k} = {resolved[k]}\n" for k in sorted(resolved))
