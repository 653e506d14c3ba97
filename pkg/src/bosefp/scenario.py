"""JSON scenario files.

A scenario fixes the model, grid, initial density and time horizon::

    {"gamma": 1, "dim": 3, "eps": 0.01,
     "grid": {"N": 2048, "R": 8, "q": 2},
     "initial": {"kind": "gaussian", "mass": 82.3, "sigma": 0.8},
     "T": 1.0, "dt": {"init": 1e-4, "min": 1e-12, "max": 1e-2},
     "diagnostics_every": 0.1}

Initial kinds: ``steady`` (theta, optional Gaussian ``bump``), ``gaussian`` (mass, mass_factor or peak amplitude, sigma),
``powerlaw_spike`` (alpha or alpha_factor, cap, L or mass/mass_factor) and
``table`` (r, g arrays, or a CSV path with columns r,g). ``mass_factor`` is in
units of the critical mass. Optional keys: eps_list, checkpoints, scheme,
tolerances, oracle, spike.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InputError
from .model import ModelParams, critical_mass, gaussian_density, steady_density
from .solver import SCHEMES, DtControl, RadialGrid, build_grid

INITIAL_KINDS = ("steady", "gaussian", "powerlaw_spike", "table")


@dataclass
class Scenario:
    params: ModelParams
    grid_spec: dict
    initial: dict
    T: float
    dt: DtControl = DtControl()
    diagnostics_every: float | None = None
    eps_list: list | None = None
    checkpoints: list | None = None
    scheme: str = "imex1"
    tolerances: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    source: str | None = None

    @property
    def grid(self) -> RadialGrid:
        g = self.grid_spec
        return build_grid(int(g.get("N", 2048)), float(g.get("R", 8.0)), float(g.get("q", 2.0)))

    def density(self) -> Callable:
        return initial_density(self.initial, self.params)

    @property
    def mass(self) -> float:
        """Total mass of the initial density (quadrature on the scenario grid)."""
        from .solver import init_state

        st = init_state(self.density(), self.grid, self.params.eps, self.params.dim)
        return self.params.c_d * float(st.values[-1])

    def with_eps(self, eps: float) -> "Scenario":
        out = Scenario(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        out.params = self.params.with_eps(eps)
        return out


def _mass_from(spec: dict, params: ModelParams) -> float:
    if "mass" in spec:
        return float(spec["mass"])
    if "mass_factor" in spec:
        params.require_profile_regime()
        return float(spec["mass_factor"]) * critical_mass(params.gamma, params.dim)
    raise ConfigurationError("initial density needs 'mass' or 'mass_factor'")


def initial_density(spec: dict, params: ModelParams) -> Callable:
    kind = spec.get("kind")
    if kind == "steady":
        theta = float(spec.get("theta", 1.0))
        if theta < 0:
            raise ConfigurationError("steady initial data needs theta >= 0")
        if "bump" not in spec:
            return lambda r: steady_density(theta, r, params.gamma)
        # excess mass as a concentrated Gaussian on top of the steady profile
        bump = gaussian_density(_mass_from(spec["bump"], params), float(spec["bump"].get("sigma", 0.15)), params.dim)
        return lambda r: steady_density(theta, r, params.gamma) + bump(r)
    if kind == "gaussian":
        sigma = float(spec.get("sigma", 1.0))
        if "amplitude" in spec:
            mass = float(spec["amplitude"]) * (2.0 * math.pi * sigma * sigma) ** (params.dim / 2.0)
        else:
            mass = _mass_from(spec, params)
        return gaussian_density(mass, sigma, params.dim)
    if kind == "powerlaw_spike":
        from .continuation import spike_amplitude_for_mass, spike_density

        alpha = float(spec["alpha"]) if "alpha" in spec else float(spec.get("alpha_factor", 0.8)) * 2.0 / params.gamma
        cap = float(spec.get("cap", 1e4))
        decay = float(spec.get("decay", 0.5))
        if "L" in spec:
            L = float(spec["L"])
        else:
            L = spike_amplitude_for_mass(_mass_from(spec, params), alpha, cap, params.dim, decay)
        return spike_density(L, alpha, cap, decay)
    if kind == "table":
        if "path" in spec:
            data = np.loadtxt(spec["path"], delimiter=",", skiprows=1, ndmin=2)
            r, g = data[:, 0], data[:, 1]
        else:
            r, g = np.asarray(spec["r"], dtype=float), np.asarray(spec["g"], dtype=float)
        if r.ndim != 1 or r.shape != g.shape or r.size < 2 or np.any(np.diff(r) <= 0):
            raise InputError("table initial data needs increasing r and matching g")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise InputError("table initial data must be finite and non-negative")
        return lambda x: np.interp(x, r, g, right=0.0)
    raise ConfigurationError(f"unknown initial kind {kind!r}; expected one of {INITIAL_KINDS}")


def from_dict(d: dict, source: str | None = None) -> Scenario:
    try:
        params = ModelParams(float(d.get("gamma", 1.0)), int(d.get("dim", 3)), float(d.get("eps", 0.01)))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad model parameters: {exc}") from exc
    T = float(d.get("T", 1.0))
    if not (T > 0 and math.isfinite(T)):
        raise ConfigurationError("T must be positive and finite")
    if "initial" not in d or not isinstance(d["initial"], dict):
        raise ConfigurationError("scenario needs an 'initial' object")
    dt = DtControl(**{k: float(v) for k, v in d.get("dt", {}).items()})
    scheme = d.get("scheme", "imex1")
    if scheme not in SCHEMES:
        raise ConfigurationError(f"scheme must be one of {SCHEMES}")
    eps_list = [float(e) for e in d["eps_list"]] if "eps_list" in d else None
    known = {"gamma", "dim", "eps", "grid", "initial", "T", "dt", "diagnostics_every", "eps_list",
             "checkpoints", "scheme", "tolerances"}
    return Scenario(params, dict(d.get("grid", {})), dict(d["initial"]), T, dt, d.get("diagnostics_every"),
                    eps_list, d.get("checkpoints"), scheme, dict(d.get("tolerances", {})),
                    {k: v for k, v in d.items() if k not in known}, source)


def load(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigurationError(f"scenario file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(d, str(path))

