"""Experiment configuration files.

Grammar, one entry per line::

    # comment
    key = value
    sweep.<key> = start:stop:step     # inclusive range
    sweep.<key> = v1, v2, v3          # explicit list

Numbers accept a ``pi`` suffix ("1.1pi", "pi/2" is not supported) and, for
durations, a ``tau_r`` suffix ("0.5tau_r") that is resolved against the
calibrated revival period of the chosen Hamiltonian. ``pulse_width`` also
accepts a ``tau`` suffix meaning a fraction of the drive period.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from typing import Any

import numpy as np

EXPERIMENTS = {
    "echo-scan": "subharmonic weight and mean entanglement vs kick angle from |Z2> and |Z4>",
    "tau-scan": "subharmonic weight and mean entanglement vs drive period",
    "nnn-scan": "stability against next-nearest-neighbour interactions",
    "pairing": "quasi-energies of U_F1 and |Z2> overlaps vs drive period",
    "splitting": "ground-doublet splitting of H_F1 vs system size",
    "bloch": "collective-spin trajectory on the Bloch sphere",
    "timescales": "T_s, T_b, T_g from stroboscopic fidelities",
    "ghz": "GHZ fidelity and quantum Fisher information",
    "correlator": "spatiotemporal density correlator C(q, omega)",
    "pulse-scan": "imbalance spectrum features with finite-width pulses",
    "custom": "plain drive with user-selected observables",
}

NEEL_FREE = {"custom"}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class Quantity:
    """A number possibly expressed in units of tau_r or of the drive period."""

    value: float
    unit: str = ""  # "", "tau_r" or "tau"

    def resolve(self, tau_r: float | None = None, tau: float | None = None) -> float:
        if self.unit == "tau_r":
            if tau_r is None:
                raise ValueError("tau_r is not available")
            return self.value * tau_r
        if self.unit == "tau":
            if tau is None:
                raise ValueError("tau is not available")
            return self.value * tau
        return self.value

    def __str__(self):
        return f"{self.value!r}{self.unit}"


_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\s*(pi|tau_r|tau)?\s*$")


def parse_number(text: str, units=("pi",), key: str = "?") -> Quantity:
    m = _NUM.match(text)
    if not m or (m.group(1) is None and m.group(2) is None):
        raise ConfigError(key, f"cannot parse number {text!r}")
    coeff = float(m.group(1)) if m.group(1) is not None else 1.0
    unit = m.group(2) or ""
    if unit and unit not in units:
        raise ConfigError(key, f"unit {unit!r} not allowed here")
    if unit == "pi":
        return Quantity(coeff * np.pi)
    return Quantity(coeff, unit)


def _as_bool(text, key):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def _as_int(text, key):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None


def _choice(*options):
    def conv(text, key):
        t = text.strip()
        if t not in options:
            raise ConfigError(key, f"expected one of {options}, got {t!r}")
        return t
    return conv


def _str_list(text, key):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _number(*units):
    return lambda text, key: parse_number(text, units + ("pi",), key)


# key -> (converter, default)
SCHEMA: dict[str, tuple[Any, Any]] = {
    "experiment": (_choice(*EXPERIMENTS), None),
    "L": (_as_int, None),
    "boundary": (_choice("periodic", "open"), "periodic"),
    "hamiltonian": (_choice("pxp", "deformed-pxp", "pxp+nnn", "rydberg"), None),
    "theta": (_number(), Quantity(np.pi)),
    "epsilon": (_number(), None),
    "tau": (_number("tau_r"), Quantity(0.5, "tau_r")),
    "n_periods": (_as_int, 400),
    "pulse": (_choice("delta", "finite"), "delta"),
    "pulse_width": (_number("tau"), Quantity(0.3, "tau")),
    "amplitude_mode": (_choice("calibrated", "raw"), "calibrated"),
    "nnn": (_number(), Quantity(0.0)),
    "h0": (_number(), Quantity(0.051)),
    "n_max": (_as_int, 8),
    "Omega": (_number(), Quantity(1.0)),
    "V1": (_number(), None),
    "V2": (_number(), None),
    "delta": (_number(), None),
    "initial": (_str_list, None),
    "observables": (_str_list, ("imbalance",)),
    "sampling": (_choice("stroboscopic", "micromotion"), "stroboscopic"),
    "substeps": (_as_int, 20),
    "entropy": (_as_bool, True),
    "n_T": (_as_int, 40),
    "spectra": (_as_bool, False),
    "normalization": (_choice("spectral", "literal"), "spectral"),
    "seed": (_as_int, 0),
    "workers": (_as_int, 1),
    "output": (str.strip, None),
    "format": (_choice("csv", "jsonl"), "csv"),
    "mode": (_choice("auto", "dense", "krylov"), "auto"),
}

SWEEPABLE = {"L", "theta", "epsilon", "tau", "nnn", "h0", "n_periods", "pulse_width", "Omega", "V1", "V2",
             "delta", "n_max"}

DEFAULT_HAMILTONIAN = {"nnn-scan": "pxp+nnn", "timescales": "rydberg", "ghz": "rydberg",
                       "pulse-scan": "rydberg"}
DEFAULT_INITIAL = {"echo-scan": ("z2", "z4")}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    sweeps: tuple = ()  # ((key, (values...)), ...)
    source: str = ""

    def __getitem__(self, key):
        return self.params[key]

    def get(self, key, default=None):
        return self.params.get(key, default)

    @property
    def n_points(self) -> int:
        n = 1
        for _, values in self.sweeps:
            n *= len(values)
        return n

    def points(self) -> list[dict]:
        """Parameter dicts of every sweep point, first sweep axis slowest."""
        grids = [[]]
        for key, values in self.sweeps:
            grids = [g + [(key, v)] for g in grids for v in values]
        return [{**self.params, **dict(g)} for g in grids]

    def echo(self) -> list[str]:
        lines = [f"experiment = {self.experiment}"]
        for k in sorted(self.params):
            if k in ("experiment", "workers", "output"):
                continue
            v = self.params[k]
            if isinstance(v, tuple):
                v = ", ".join(map(str, v))
            lines.append(f"{k} = {v}")
        for key, values in self.sweeps:
            lines.append(f"sweep.{key} = " + ", ".join(map(str, values)))
        return lines


def _quantity(v) -> Quantity:
    return v if isinstance(v, Quantity) else Quantity(float(v))


def _parse_range(text: str, conv, key: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(key, f"range must be start:stop:step, got {text!r}")
    start, stop, step = (_quantity(conv(p, key)) for p in parts)
    units = {q.unit for q in (start, stop, step)}
    if len(units) != 1:
        raise ConfigError(key, "range endpoints and step must share a unit")
    if step.value <= 0:
        raise ConfigError(key, "range step must be positive")
    if stop.value < start.value:
        raise ConfigError(key, "range is empty")
    n = int(np.floor((stop.value - start.value) / step.value + 1e-9)) + 1
    unit = units.pop()
    return tuple(Quantity(float(start.value + i * step.value), unit) for i in range(n))


def parse_config(text: str) -> ExperimentConfig:
    """Parse, default and validate a configuration text."""
    raw: dict[str, str] = {}
    sweeps_raw: list[tuple[str, str]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("sweep."):
            name = key[len("sweep."):]
            if name not in SCHEMA:
                raise ConfigError(key, "unknown key")
            if name not in SWEEPABLE:
                raise ConfigError(key, "parameter cannot be swept")
            if any(name == k for k, _ in sweeps_raw):
                raise ConfigError(key, "duplicate sweep axis")
            sweeps_raw.append((name, value))
            continue
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        if key in raw:
            raise ConfigError(key, "duplicate key")
        raw[key] = value

    if "experiment" not in raw:
        raise ConfigError("experiment", "missing required key")
    params: dict[str, Any] = {}
    for key, (conv, default) in SCHEMA.items():
        params[key] = conv(raw[key], key) if key in raw else default
    exp = params["experiment"]
    if params["hamiltonian"] is None:
        params["hamiltonian"] = DEFAULT_HAMILTONIAN.get(exp, "pxp")
    if params["L"] is None:
        params["L"] = 10 if params["hamiltonian"] == "rydberg" else 16
    if params["initial"] is None:
        params["initial"] = DEFAULT_INITIAL.get(exp, ("z2",))
    if params["epsilon"] is not None:
        if "theta" in raw:
            raise ConfigError("epsilon", "give either theta or epsilon, not both")
        params["theta"] = Quantity(np.pi - params["epsilon"].value)

    sweeps = []
    for name, value in sweeps_raw:
        conv = SCHEMA[name][0]
        if ":" in value:
            values = _parse_range(value, conv, f"sweep.{name}")
        else:
            values = tuple(conv(v.strip(), f"sweep.{name}") for v in value.split(",") if v.strip())
        if not values:
            raise ConfigError(f"sweep.{name}", "sweep is empty")
        if name in ("L", "n_periods", "n_max"):
            values = tuple(int(v.value) if isinstance(v, Quantity) else int(v) for v in values)
        sweeps.append((name, values))
    if any(name == "epsilon" for name, _ in sweeps) and any(name == "theta" for name, _ in sweeps):
        raise ConfigError("sweep.epsilon", "cannot sweep theta and epsilon together")

    _validate(params, sweeps)
    return ExperimentConfig(exp, params, tuple(sweeps), text)


def _validate(params, sweeps):
    exp = params["experiment"]
    Ls = [params["L"]]
    for name, values in sweeps:
        if name == "L":
            Ls = list(values)
    for L in Ls:
        if L < 2:
            raise ConfigError("L", f"L must be at least 2, got {L}")
        needs_neel = exp not in NEEL_FREE or any(s in ("z2", "z2p") for s in params["initial"])
        if needs_neel and L % 2:
            raise ConfigError("L", f"experiment {exp} needs Neel states, which require even L (got L={L})")
        if "z4" in params["initial"] and L % 4 and exp in ("echo-scan", "custom"):
            raise ConfigError("L", f"|Z4> needs L divisible by 4 (got L={L})")
        if params["hamiltonian"] == "rydberg" and L > 16:
            raise ConfigError("L", f"full-space Rydberg simulations are limited to L <= 16 (got L={L})")
    for s in params["initial"]:
        if s not in ("z2", "z2p", "z4", "zero", "random"):
            raise ConfigError("initial", f"unknown initial state {s!r}")
    if params["n_periods"] < 0:
        raise ConfigError("n_periods", "must be non-negative")
    if params["workers"] < 1:
        raise ConfigError("workers", "must be at least 1")
    if params["substeps"] < 1:
        raise ConfigError("substeps", "must be at least 1")
    if exp == "splitting" and params["boundary"] != "periodic":
        raise ConfigError("boundary", "splitting uses momentum sectors and needs periodic boundaries")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def replace_params(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return dataclasses.replace(cfg, params={**cfg.params, **changes})
