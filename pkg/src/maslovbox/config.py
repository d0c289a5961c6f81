"""YAML run configurations.

A configuration names a problem, the counting methods to run and where the
results go.  Numbers may be written as decimal strings (``"0.5"``) so files
read the same under every locale; complex entries use Python syntax
(``"1+2j"``).  Example::

    schema_version: 1
    problem:
      model: star_graph_nls
      n: 3
      p: "1"
      operator: L+
    methods: [target0, targetplus, corollary, oracle]
    lambda0: "0"
    tolerances:
      settle: "1e-8"
    output:
      dir: out
      trajectories: false
    sweep:
      p: ["0.5", "1", "2"]
      n: [2, 3, 5]

Sweep keys override problem parameters (or ``lambda0``); the grid is the
Cartesian product in the order the keys are written.
"""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .errors import ConfigError
from .morse import METHODS, MorseOptions
from .problem import BoundaryCondition, CoefficientModel, HalfLineSystem
from .star_graph import StarGraphNLS, build_system, neumann_kirchhoff

SCHEMA_VERSION = 1
ALL_METHODS = METHODS + ("oracle",)
MODELS = ("constant", "star_graph_nls", "sech_potential", "tabulated")

_TOLERANCE_KEYS = {
    "settle": "settle_tol",
    "crossing": "crossing_tol",
    "eigen": "eigen_tol",
    "eigen_shift": "eigen_shift",
    "end_margin": "end_margin",
    "bump": "bump",
    "lambda_inf": "lambda_inf",
    "max_x": "max_x",
}


def to_float(value, what: str = "value") -> float:
    """Accept numbers or decimal strings."""
    if isinstance(value, bool):
        raise ConfigError(f"{what}: expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: cannot read {value!r} as a real number") from None


def to_complex(value, what: str = "value") -> complex:
    if isinstance(value, bool):
        raise ConfigError(f"{what}: expected a number, got {value!r}")
    try:
        return complex(str(value).replace(" ", "")) if isinstance(value, str) else complex(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: cannot read {value!r} as a complex number") from None


def to_matrix(value, what: str, n: Optional[int] = None) -> np.ndarray:
    """Nested lists (or a scalar when ``n`` is known: ``c I``) to a complex matrix."""
    if np.ndim(value) == 0 and not isinstance(value, (list, tuple)):
        if n is None:
            raise ConfigError(f"{what}: a scalar needs a known dimension")
        return to_complex(value, what) * np.eye(n, dtype=complex)
    try:
        M = np.array([[to_complex(v, what) for v in row] for row in value], dtype=complex)
    except TypeError:
        raise ConfigError(f"{what}: expected a list of rows") from None
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"{what}: expected a square matrix, got shape {M.shape}")
    if n is not None and M.shape[0] != n:
        raise ConfigError(f"{what}: expected {n} x {n}, got {M.shape}")
    return M


@dataclass
class RunConfig:
    """Parsed configuration; ``problem`` stays a plain mapping so sweeps can
    override its entries."""

    problem: dict
    methods: tuple
    lambda0: float = 0.0
    tolerances: dict = field(default_factory=dict)
    output_dir: Optional[str] = None
    trajectories: bool = False
    sweep: dict = field(default_factory=dict)
    source: Optional[str] = None

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {list(ALL_METHODS)}")
        for k, v in self.tolerances.items():
            if k not in _TOLERANCE_KEYS:
                raise ConfigError(f"unknown tolerance {k!r}; known: {sorted(_TOLERANCE_KEYS)}")
            if not v > 0:
                raise ConfigError(f"tolerance {k!r} must be positive, got {v}")

    def morse_options(self) -> MorseOptions:
        kw = {_TOLERANCE_KEYS[k]: v for k, v in self.tolerances.items()}
        return MorseOptions(**kw)

    def grid(self) -> list[dict]:
        """Parameter overrides for every sweep cell (one empty cell without a sweep)."""
        if not self.sweep:
            return [{}]
        keys = list(self.sweep)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.sweep[k] for k in keys))]

    def cell(self, overrides: dict) -> "RunConfig":
        """A single-run configuration with sweep overrides applied."""
        problem = copy.deepcopy(self.problem)
        lambda0 = self.lambda0
        for k, v in overrides.items():
            if k == "lambda0":
                lambda0 = to_float(v, "lambda0")
            else:
                problem[k] = v
        return RunConfig(problem, self.methods, lambda0, dict(self.tolerances), self.output_dir, self.trajectories, {}, self.source)

    def build_system(self) -> HalfLineSystem:
        return build_problem(self.problem)


def _boundary(spec, n: int) -> BoundaryCondition:
    if spec is None:
        raise ConfigError("problem.boundary is required for this model")
    if isinstance(spec, str):
        key = spec.strip().lower()
        if key == "dirichlet":
            return BoundaryCondition.dirichlet(n)
        if key == "neumann":
            return BoundaryCondition.neumann(n)
        if key in ("neumann_kirchhoff", "kirchhoff"):
            return neumann_kirchhoff(n)
        raise ConfigError(f"unknown boundary keyword {spec!r}")
    if not isinstance(spec, dict) or not {"alpha1", "alpha2"} <= set(spec):
        raise ConfigError("problem.boundary must be a keyword or a mapping with alpha1 and alpha2")
    return BoundaryCondition(to_matrix(spec["alpha1"], "boundary.alpha1", n), to_matrix(spec["alpha2"], "boundary.alpha2", n))


def _sech_model(spec: dict, n: int) -> CoefficientModel:
    """``P = Q = I``, ``V(x) = V+ - S sech^2(a x)``."""
    Vp = to_matrix(spec.get("V_plus", 1), "V_plus", n)
    S = to_matrix(spec.get("depth", 0), "depth", n)
    a = to_float(spec.get("width", 1), "width")
    if not a > 0:
        raise ConfigError("width must be positive")
    I = np.eye(n)

    def ident(xs):
        return np.broadcast_to(I, np.shape(xs) + (n, n)).astype(complex)

    def V(xs):
        xs = np.asarray(xs, dtype=float)
        return Vp - (1.0 / np.cosh(a * xs) ** 2)[..., None, None] * S

    def zero(xs):
        return np.zeros(np.shape(xs) + (n, n), dtype=complex)

    C_V = max(np.linalg.norm(Vp, 2), np.linalg.norm(Vp - S, 2))
    return CoefficientModel(
        n=n, P=ident, V=V, Q=ident, P_plus=I, V_plus=Vp, Q_plus=I, eta=2.0 * a, theta_P=1.0, theta_Q=1.0,
        C_V=float(C_V), decay_C=4.0 * float(np.linalg.norm(S, 2)), Pprime=zero, name=spec.get("name", "sech_potential"), constant_P=True,
    )


def build_problem(spec: dict) -> HalfLineSystem:
    """Turn a ``problem`` mapping into a :class:`HalfLineSystem`."""
    if not isinstance(spec, dict) or "model" not in spec:
        raise ConfigError("problem must be a mapping with a 'model' entry")
    model = spec["model"]
    if model == "star_graph_nls":
        for key in ("n", "p"):
            if key not in spec:
                raise ConfigError(f"star_graph_nls needs {key!r}")
        n = spec["n"]
        if isinstance(n, str):
            n = int(n)
        return build_system(StarGraphNLS(n, to_float(spec["p"], "p"), spec.get("operator", "L+")))
    if model == "constant":
        P = to_matrix(spec.get("P", 1), "P", spec.get("n"))
        n = P.shape[0]
        m = CoefficientModel.constant(P, to_matrix(spec.get("V", 1), "V", n), to_matrix(spec.get("Q", 1), "Q", n), name="constant")
        return HalfLineSystem(m, _boundary(spec.get("boundary"), n), name="constant")
    if model == "sech_potential":
        n = int(spec.get("n", 1))
        return HalfLineSystem(_sech_model(spec, n), _boundary(spec.get("boundary"), n), name="sech_potential")
    if model == "tabulated":
        try:
            grid = [to_float(v, "grid") for v in spec["grid"]]
            arrs = {k: [to_matrix(m, f"{k}[{i}]") for i, m in enumerate(spec[k])] for k in ("P", "V", "Q")}
            bounds = {k: to_float(spec[k], k) for k in ("eta", "theta_P", "theta_Q", "C_V")}
        except KeyError as exc:
            raise ConfigError(f"tabulated model needs {exc.args[0]!r}") from None
        m = CoefficientModel.tabulated(
            grid, arrs["P"], arrs["V"], arrs["Q"], decay_C=to_float(spec.get("decay_C", 1), "decay_C"), name="tabulated", **bounds
        )
        return HalfLineSystem(m, _boundary(spec.get("boundary"), m.n), name="tabulated")
    raise ConfigError(f"unknown model {model!r}; choose from {list(MODELS)}")


def parse_config(data: Any, source: Optional[str] = None) -> RunConfig:
    """Validate a loaded mapping and return a :class:`RunConfig`."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    known = {"schema_version", "problem", "methods", "lambda0", "tolerances", "output", "sweep"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    if "problem" not in data:
        raise ConfigError("missing 'problem'")
    methods = data.get("methods", ["target0"])
    if isinstance(methods, str):
        methods = [m.strip() for m in methods.split(",")]
    if not isinstance(methods, list):
        raise ConfigError("methods must be a list")
    if "all" in methods:
        methods = list(ALL_METHODS)
    tol = {k: to_float(v, f"tolerances.{k}") for k, v in (data.get("tolerances") or {}).items()}
    out = data.get("output") or {}
    sweep = data.get("sweep") or {}
    if not isinstance(sweep, dict) or any(not isinstance(v, list) for v in sweep.values()):
        raise ConfigError("sweep must map parameter names to lists of values")
    return RunConfig(
        problem=dict(data["problem"]),
        methods=tuple(dict.fromkeys(methods)),
        lambda0=to_float(data.get("lambda0", 0), "lambda0"),
        tolerances=tol,
        output_dir=out.get("dir"),
        trajectories=bool(out.get("trajectories", False)),
        sweep=sweep,
        source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return parse_config(data, str(path))
