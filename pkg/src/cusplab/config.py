"""Experiment configuration: one JSON document validated against the shipped schema.

Defaults live only in ``config_schema.json``; :func:`load_config` fills
them in, validates the structure with jsonschema and then checks the
numeric ranges that the schema cannot express.
"""

import copy
import json
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np

from .errors import ConfigError, CuspLabError

KINDS = ("compat", "bootstrap", "ode-lemma", "poincare-sweep", "norms-sweep")

# Sweep axis name -> (section, key); ``None`` section means top level.
AXES = {
    "lambda": ("params", "lambda"),
    "eta": ("params", "eta"),
    "epsilon0": ("params", "epsilon0"),
    "sigma_margin": ("params", "sigma_margin"),
    "step_factor": ("params", "step_factor"),
    "growth_threshold": ("params", "growth_threshold"),
    "trace_tol": ("params", "trace_tol"),
    "constant_cap": ("params", "constant_cap"),
    "rate_tolerance": ("params", "rate_tolerance"),
    "R": ("geometry", "R"),
    "dr": ("geometry", "dr"),
    "K": ("geometry", "K"),
    "seed": (None, "seed"),
    "v11": ("planted", "v11"),
    "v12": ("planted", "v12"),
    "amplitude": ("planted", "amplitude"),
}
INTEGER_AXES = {"K", "seed"}


@lru_cache(maxsize=1)
def load_schema():
    """The shipped JSON schema as a dict."""
    text = resources.files("cusplab").joinpath("config_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _defaults(schema):
    if schema.get("type") == "object" and "properties" in schema:
        return {k: _defaults(sub) for k, sub in schema["properties"].items()}
    return copy.deepcopy(schema.get("default"))


def default_config():
    """Configuration with every default from the schema."""
    return _defaults(load_schema())


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg):
    """Raise :class:`ConfigError` unless ``cfg`` is a complete, valid configuration."""
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    p = cfg["params"]
    if not 0 < p["lambda"] < 1:
        raise ConfigError(f"params/lambda must lie in (0, 1), got {p['lambda']}")
    if not p["eta"] > 1:
        raise ConfigError(f"params/eta must exceed 1, got {p['eta']}")
    g = cfg["geometry"]
    _check_grid(g["R"], g["dr"], "geometry")
    _check_grid(cfg["poincare"]["R"], cfg["poincare"]["dr"], "poincare")
    for R in cfg["ode_lemma"]["r_values"]:
        _check_grid(R, g["dr"], "ode_lemma/r_values")
    _check_gram(g["gram"])
    if cfg["sweep"]["axis"] not in AXES:
        raise ConfigError(f"sweep/axis: unknown axis {cfg['sweep']['axis']!r}; "
                          f"choose one of {', '.join(sorted(AXES))}")
    try:
        from .bootstrap import BootstrapParams

        bootstrap_params(cfg, BootstrapParams)
    except CuspLabError as exc:
        raise ConfigError(f"params: {exc}") from None
    return cfg


def _check_grid(R, dr, where):
    if not dr > 0:
        raise ConfigError(f"{where}/dr must be positive, got {dr}")
    if R < 5 * dr:
        raise ConfigError(f"{where}/R must be at least 5*dr, got R={R}, dr={dr}")
    steps = R / dr
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise ConfigError(f"{where}/R={R} is not a multiple of dr={dr}")


def _check_gram(gram):
    g = np.asarray(gram, dtype=float)
    if not np.all(np.isfinite(g)) or abs(g[0, 1] - g[1, 0]) > 1e-12 * max(1.0, np.abs(g).max()):
        raise ConfigError("geometry/gram must be finite and symmetric")
    if np.linalg.eigvalsh(g).min() <= 0:
        raise ConfigError("geometry/gram must be positive definite")


def load_config(path=None, overrides=None):
    """Read, complete and validate a configuration.

    Parameters
    ----------
    path : str or Path, optional
        JSON file; omitted means all defaults.
    overrides : dict, optional
        Nested values applied after the file (command-line flags).

    Raises
    ------
    ConfigError
        Unreadable file, malformed JSON or invalid values.
    """
    user = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except ValueError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
    # Unknown keys are reported by the schema, so validate the raw document first.
    try:
        jsonschema.validate(user, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    cfg = _merge(default_config(), user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate(cfg)


def with_axis(cfg, axis, value):
    """Copy of ``cfg`` with the sweep axis set to ``value`` (validated)."""
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    if axis in INTEGER_AXES:
        if float(value) != int(value):
            raise ConfigError(f"sweep axis {axis} needs integer values, got {value}")
        value = int(value)
    else:
        value = float(value)
    section, key = AXES[axis]
    out = copy.deepcopy(cfg)
    (out if section is None else out[section])[key] = value
    return validate(out)


def bootstrap_params(cfg, cls=None):
    """``BootstrapParams`` from the ``params`` section and the master seed."""
    if cls is None:
        from .bootstrap import BootstrapParams as cls
    p = cfg["params"]
    return cls(lam=p["lambda"], eta=p["eta"], epsilon0=p["epsilon0"], seed=cfg["seed"],
               sigma_margin=p["sigma_margin"], step_factor=p["step_factor"],
               growth_threshold=p["growth_threshold"], trace_tol=p["trace_tol"],
               constant_cap=p["constant_cap"], rate_tolerance=p["rate_tolerance"],
               fiber_samples=p["fiber_samples"])
