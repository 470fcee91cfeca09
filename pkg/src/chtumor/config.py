"""Flat ``key=value`` run configuration.

One key per line, dotted section names, ``#`` starts a comment. Every key
is declared in ``SCHEMA``; unknown keys and malformed values are rejected
with the offending line number.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import Control, CostSpec, DecaySource
from .grid import Grid
from .model import ModelSpec
from .solver import SchemeParams


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + msg)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(" ", "").split(",") if x)


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace(" ", "").split(",") if x)


def _opt_float(s: str):
    return None if s.lower() in ("none", "auto", "") else float(s)


def _field_keys(prefix: str) -> dict:
    return {
        f"{prefix}.kind": (str, "constant"),
        f"{prefix}.value": (float, 0.0),
        f"{prefix}.mode": (_ints, ()),
        f"{prefix}.amplitude": (float, 0.0),
        f"{prefix}.n_modes": (int, 8),
        f"{prefix}.path": (str, ""),
    }


SCHEMA: dict[str, tuple] = {
    "seed": (int, 0),
    "grid.n": (_ints, (64,)),
    "grid.L": (_floats, (1.0,)),
    "model.potential": (str, "quartic"),
    "model.poly_coeffs": (_floats, ()),
    "model.proliferation": (str, "constant"),
    "model.P0": (float, 1.0),
    "model.gamma": (float, 1.0),
    "model.P1": (float, 0.1),
    "scheme.dt": (float, 1e-2),
    "scheme.t_end": (float, 1.0),
    "scheme.kappa": (_opt_float, None),
    "scheme.adapt": (str, "off"),
    "scheme.max_steps": (int, 10**7),
    **_field_keys("init.phi"),
    **_field_keys("init.sigma"),
    "control.kind": (str, "zero"),  # zero | decay | slabs | file
    "control.value": (float, 0.0),
    "control.g": (float, 0.0),
    "control.rho": (float, 0.5),
    "control.n_slabs": (int, 1),
    "control.u_min": (float, -np.inf),
    "control.u_max": (float, np.inf),
    "control.path": (str, ""),
    "control.radius": (_opt_float, None),
    "cost.beta_Q": (float, 0.0),
    "cost.beta_Omega": (float, 0.0),
    "cost.alpha_Q": (float, 0.0),
    "cost.beta_S": (float, 0.0),
    "cost.beta_u": (float, 0.0),
    "cost.beta_T": (float, 0.0),
    "cost.phi_Q": (str, "0"),  # number, "reference" or snapshot path
    "cost.phi_Omega": (str, "0"),
    "cost.sigma_Q": (str, "0"),
    "cost.tau": (_opt_float, None),
    "output.store_every": (int, 1),
    "output.snapshot_every": (int, 0),
    "equilibrate.tol": (float, 1e-9),
    "equilibrate.residual_tol": (float, 1e-6),
    "stability.phi_star": (float, 1.0),
    "stability.sigma_star": (float, 0.0),
    "stability.eta": (float, 1e-3),
    "stability.epsilon": (float, 1e-1),
    "stability.horizon": (float, 50.0),
    "stability.n_probes": (int, 8),
    "stability.dt": (float, 0.05),
    "stability.n_modes": (int, 8),
    "steady.m": (float, 0.0),
    "steady.tol": (float, 1e-10),
    "steady.max_iter": (int, 20_000),
    "decay_fit.source": (str, "synthetic"),  # synthetic | file | equilibrate
    "decay_fit.C": (float, 3.0),
    "decay_fit.lambda": (float, 2.0),
    "decay_fit.t_max": (float, 100.0),
    "decay_fit.n": (int, 200),
    "decay_fit.window": (_floats, ()),
    "decay_fit.path": (str, ""),
    "optimize.tol_u": (float, 1e-8),
    "optimize.max_iter": (int, 200),
    "optimize.gradient_mode": (str, "discrete"),
    "optimize.control_basis": (str, "field"),
    "optimize.tol_tau": (float, 1e-6),
    "optimize.tau0": (_opt_float, None),
    "gradcheck.eps_max": (float, 1e-1),
    "gradcheck.eps_min": (float, 1e-8),
    "gradcheck.n_eps": (int, 8),
    "gradcheck.n_directions": (int, 5),
}


def parse_text(text: str, source: str = "<config>") -> dict[str, tuple[str, int]]:
    """Raw ``key -> (value, line)`` pairs. Duplicate keys are an error."""
    out: dict[str, tuple[str, int]] = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", i, source)
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", i, source)
        if key in out:
            raise ConfigError(f"duplicate key {key!r} (first on line {out[key][1]})", i, source)
        out[key] = (val, i)
    return out


@dataclass
class RunConfig:
    """Typed view of a configuration file with all model validations applied."""

    values: dict
    lines: dict = field(default_factory=dict)
    source: str = "<config>"
    base_dir: Path = Path(".")

    @classmethod
    def from_text(cls, text: str, source: str = "<config>", base_dir=".") -> "RunConfig":
        raw = parse_text(text, source)
        values, lines = {}, {}
        for key, (val, ln) in raw.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}", ln, source)
            conv = SCHEMA[key][0]
            try:
                values[key] = conv(val)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}", ln, source) from None
            lines[key] = ln
        cfg = cls(values, lines, source, Path(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", None, str(p)) from None
        return cls.from_text(text, str(p), p.parent)

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][1]

    def effective(self) -> dict[str, str]:
        """Explicitly set keys as normalized strings, for hashing."""
        return {k: repr(v) for k, v in sorted(self.values.items())}

    def error(self, key: str, msg: str) -> ConfigError:
        return ConfigError(f"{key}: {msg}", self.lines.get(key), self.source)

    def _build(self, keys, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            first = next((k for k in keys if k in self.lines), keys[0])
            raise self.error(first, str(exc)) from None

    def validate(self):
        """Construct every object once so invalid data fail at load."""
        self.grid()
        self.model()
        self.scheme()
        self.control()
        if any(self[f"cost.{w}"] for w in ("beta_Q", "beta_Omega", "alpha_Q", "beta_S", "beta_u", "beta_T")):
            self.cost()

    # builders ---------------------------------------------------------

    def grid(self) -> Grid:
        return self._build(["grid.n", "grid.L"], lambda: Grid(self["grid.n"], self["grid.L"]))

    def model(self) -> ModelSpec:
        keys = ["model.potential", "model.poly_coeffs", "model.proliferation", "model.P0", "model.gamma", "model.P1"]
        return self._build(
            keys,
            lambda: ModelSpec(
                potential=self["model.potential"],
                poly_coeffs=self["model.poly_coeffs"],
                proliferation=self["model.proliferation"],
                P0=self["model.P0"],
                gamma=self["model.gamma"],
                P1=self["model.P1"],
            ),
        )

    def scheme(self) -> SchemeParams:
        keys = ["scheme.dt", "scheme.t_end", "scheme.kappa", "scheme.adapt", "scheme.max_steps"]
        return self._build(
            keys,
            lambda: SchemeParams(
                dt=self["scheme.dt"],
                t_end=self["scheme.t_end"],
                kappa=self["scheme.kappa"],
                adapt=self["scheme.adapt"],
                max_steps=self["scheme.max_steps"],
            ),
        )

    def _path(self, s: str) -> Path:
        p = Path(s)
        return p if p.is_absolute() else self.base_dir / p

    def _snapshot(self, key: str, grid: Grid) -> np.ndarray:
        from .io import read_snapshot

        try:
            g, _, v = read_snapshot(self._path(self[key]))
        except (OSError, ValueError) as exc:
            raise self.error(key, f"cannot load snapshot: {exc}") from None
        if g.n != grid.n:
            raise self.error(key, f"snapshot grid {g.n} does not match {grid.n}")
        return v

    def initial_field(self, name: str, rng: np.random.Generator) -> np.ndarray:
        """Constant, constant plus eigenmode, constant plus band-limited noise, or file."""
        grid = self.grid()
        p = f"init.{name}"
        kind = self[f"{p}.kind"]
        base = np.full(grid.shape, self[f"{p}.value"])
        if kind == "constant":
            return base
        if kind == "mode":
            k = self[f"{p}.mode"] or (1,) * grid.dim
            if len(k) != grid.dim:
                raise self.error(f"{p}.mode", f"need {grid.dim} indices")
            m = grid.mode(k)
            return base + self[f"{p}.amplitude"] * m / np.max(np.abs(m))
        if kind == "noise":
            c = np.zeros(grid.shape)
            sl = tuple(slice(0, min(self[f"{p}.n_modes"], n)) for n in grid.shape)
            c[sl] = rng.normal(size=c[sl].shape)
            c.flat[0] = 0.0
            f = grid.inverse(c)
            peak = np.max(np.abs(f))
            return base + (self[f"{p}.amplitude"] * f / peak if peak > 0 else 0.0)
        if kind == "file":
            return self._snapshot(f"{p}.path", grid)
        raise self.error(f"{p}.kind", f"unknown initial-condition kind {kind!r}")

    def control(self):
        """``None`` (u = 0), a DecaySource or a slab Control."""
        grid = self.grid()
        kind = self["control.kind"]
        T = self["scheme.t_end"]
        if kind == "zero":
            return None
        if kind == "decay":
            return self._build(["control.rho", "control.g"],
                               lambda: DecaySource(np.full(grid.shape, self["control.g"]), self["control.rho"]))
        keys = ["control.u_min", "control.u_max", "control.n_slabs", "control.value"]
        if kind == "slabs":
            ctrl = self._build(keys, lambda: Control.constant(
                grid, T, self["control.value"], self["control.n_slabs"], self["control.u_min"], self["control.u_max"]))
        elif kind == "file":
            v = self._snapshot("control.path", grid)
            ctrl = self._build(keys, lambda: Control(
                grid, T, np.repeat(v[None], self["control.n_slabs"], axis=0),
                self["control.u_min"], self["control.u_max"]))
        else:
            raise self.error("control.kind", f"unknown control kind {kind!r}")
        r = self["control.radius"]
        if r is not None and ctrl.norm() > r:
            raise self.error("control.radius", f"control norm {ctrl.norm():.6g} exceeds radius {r}")
        return ctrl

    def _target(self, key: str, grid: Grid, reference):
        s = self[key]
        if s == "reference":
            if reference is None:
                raise self.error(key, "'reference' needs the uncontrolled trajectory")
            return reference(key)
        try:
            return float(s)
        except ValueError:
            return self._snapshot(key, grid)

    def cost(self, reference=None) -> CostSpec:
        """``reference(key)`` supplies targets written as ``reference`` (the
        trajectory of the configured initial control)."""
        grid = self.grid()
        keys = [f"cost.{w}" for w in ("beta_Q", "beta_Omega", "alpha_Q", "beta_S", "beta_u", "beta_T")]
        targets = {
            name: self._target(f"cost.{name}", grid, reference) if self[f"cost.{name}"] != "reference" or reference
            else 0.0
            for name in ("phi_Q", "phi_Omega", "sigma_Q")
        }
        return self._build(keys, lambda: CostSpec(
            T=self["scheme.t_end"],
            **{k.split(".")[1]: self[k] for k in keys},
            **targets,
        ))
