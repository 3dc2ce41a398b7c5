"""Flat ``key = value`` experiment configuration shared by files and flags."""

import os
from dataclasses import dataclass, field, fields

ENV_SEED = "OPDICKMAN_SEED"


class ConfigError(ValueError):
    """A configuration value is missing or malformed; ``field`` names it."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _fmt_seq(values):
    return ",".join(repr(v) for v in values)


@dataclass
class ExperimentConfig:
    experiment: str = "sample"
    dim: int | None = None
    q: str | None = None
    nu: str | None = None
    n: int | None = None
    seed: int | None = None
    eps: float = 1e-10
    nmax: int = 10_000
    alpha: float = 0.5
    eps_schedule: tuple = (2.0, 1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001)
    n_list: tuple = (1, 5, 20, 200)
    k_list: tuple = (1, 2, 3, 5, 8, 20)
    k_max: int = 40
    reference: str = "stated"
    theta: float = 1.0
    xmax: float = 10.0
    step: float = 1e-3
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def format(self):
        """Serialize to key = value lines (unset optional keys are omitted)."""
        lines = []
        for f in fields(self):
            if f.name == "extra":
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = _fmt_seq(v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        for k, v in sorted(self.extra.items()):
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text):
        values = {}
        extra = {}
        known = {f.name for f in fields(cls)} - {"extra"}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected key = value, got {raw!r}")
            key, val = (p.strip() for p in line.split("=", 1))
            key = key.replace("-", "_")
            if key in known:
                values[key] = val
            else:
                extra[key] = val
        cfg = cls()
        cfg.update(values)
        cfg.extra = extra
        return cfg

    def update(self, values):
        """Set fields from strings or already-typed values (None is skipped)."""
        for key, val in values.items():
            if val is None:
                continue
            setattr(self, key, _coerce(key, val))
        return self


_CONVERTERS = {
    "dim": int, "n": int, "seed": int, "nmax": int, "k_max": int,
    "eps": float, "alpha": float, "theta": float, "xmax": float, "step": float,
    "eps_schedule": _floats, "n_list": _ints, "k_list": _ints,
}


def _coerce(key, val):
    conv = _CONVERTERS.get(key)
    if conv is None or not isinstance(val, str):
        if isinstance(val, list):
            return tuple(val)
        return val
    try:
        return conv(val)
    except ValueError:
        raise ConfigError(key, f"cannot parse {val!r}") from None


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return ExperimentConfig.parse(fh.read())
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None


def default_seed():
    raw = os.environ.get(ENV_SEED)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(ENV_SEED, f"not an integer: {raw!r}") from None
