"""Run configuration: YAML schema, defaults and validation.

Example::

    domain: {shape: disk}            # disk | ellipse (a, b) | fourier (coeffs)
    flavor: neumann                  # neumann | dirichlet
    boundary_rule: reflection        # reflection | absorption
    h_N: uniform                     # uniform | zero | [a0, a1, b1, ...]
    h_cha: uniform
    charges:
      - {xi: [0.3, 0.1], eta: [0.0, 0.0]}
    plasma:
      - {x: [-0.6, -0.1], y: [-0.4, 0.4], vx: [-0.5, 0.5], vy: [-0.5, 0.5],
         weight: 1.0, count: 2000}
    dt: 5.0e-4
    T: 1.0
    stride: 20
    seed: 0
    K1: 1.0
    delta1: 0.05
    numerics: {n_b: 256, encounter_radius: null}
    diagnostics: {moments: true, beta: true}

``uniform`` data have total ``sum of plasma weights`` for ``h_N`` and ``M``
for ``h_cha``. Dirichlet runs always use zero boundary data.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import ConvexDomain, domain_from_config
from .greens import BoundaryDensity, BoundaryFlavor, density_from_config

DEFAULTS = {
    "domain": {"shape": "disk"},
    "flavor": "neumann",
    "boundary_rule": "reflection",
    "h_N": "uniform",
    "h_cha": "uniform",
    "charges": [],
    "plasma": [],
    "dt": 1e-3,
    "T": 1.0,
    "stride": 1,
    "seed": 0,
    "K1": 1.0,
    "delta1": 0.0,
    "numerics": {"n_b": 256, "encounter_radius": None},
    "diagnostics": {"moments": True, "beta": True},
}

_KEYS = set(DEFAULTS) | {"desing"}
_COMPAT_TOL = 1e-8


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _box_support(box: dict) -> np.ndarray:
    # four corners of the spatial rectangle
    x0, x1 = box["x"]
    y0, y1 = box["y"]
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def _rect_point_distance(box: dict, p) -> float:
    x0, x1 = box["x"]
    y0, y1 = box["y"]
    dx = max(x0 - p[0], 0.0, p[0] - x1)
    dy = max(y0 - p[1], 0.0, p[1] - y1)
    return float(np.hypot(dx, dy))


@dataclass
class RunConfig:
    """Validated run configuration (see module docstring for the schema)."""

    raw: dict
    domain: ConvexDomain = field(init=False)
    flavor: BoundaryFlavor = field(init=False)
    h_N: BoundaryDensity = field(init=False)
    h_cha: BoundaryDensity = field(init=False)

    def __post_init__(self):
        unknown = set(self.raw) - _KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}", "config-schema")
        self.raw = _merge(DEFAULTS, self.raw)
        self._validate()

    # accessors ---------------------------------------------------------
    @property
    def rule(self) -> str:
        return self.raw["boundary_rule"]

    @property
    def charges(self) -> list:
        return self.raw["charges"]

    @property
    def plasma(self) -> list:
        return self.raw["plasma"]

    @property
    def M(self) -> int:
        return len(self.charges)

    @property
    def total_weight(self) -> float:
        return float(sum(float(b["weight"]) for b in self.plasma))

    @property
    def dt(self) -> float:
        return float(self.raw["dt"])

    @property
    def T(self) -> float:
        return float(self.raw["T"])

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def stride(self) -> int:
        return int(self.raw["stride"])

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def K1(self) -> float:
        return float(self.raw["K1"])

    @property
    def n_b(self) -> int:
        return int(self.raw["numerics"]["n_b"])

    @property
    def encounter_radius(self):
        r = self.raw["numerics"].get("encounter_radius")
        return None if r is None else float(r)

    def xi0(self) -> np.ndarray:
        return np.array([c["xi"] for c in self.charges], dtype=float).reshape(-1, 2)

    def eta0(self) -> np.ndarray:
        return np.array([c.get("eta", [0.0, 0.0]) for c in self.charges], dtype=float).reshape(-1, 2)

    # validation ----------------------------------------------------------
    def _validate(self):
        raw = self.raw
        try:
            self.domain = domain_from_config(raw["domain"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad domain spec: {exc}", "domain-shape") from exc
        self.flavor = BoundaryFlavor.parse(raw["flavor"])
        if raw["boundary_rule"] not in ("reflection", "absorption"):
            raise ConfigError("boundary_rule must be reflection or absorption", "boundary-rule")
        for key in ("dt", "T"):
            if not float(raw[key]) > 0:
                raise ConfigError(f"{key} must be positive", "time-grid")
        if int(raw["stride"]) < 1:
            raise ConfigError("stride must be at least 1", "time-grid")
        if float(raw["delta1"]) < 0:
            raise ConfigError("delta1 must be nonnegative", "singular-set-separation")
        if int(raw["seed"]) < 0:
            raise ConfigError("seed must be a nonnegative integer", "seed")
        for c in self.charges:
            if "xi" not in c:
                raise ConfigError("each charge needs an xi entry", "config-schema")
        for box in self.plasma:
            missing = {"x", "y", "vx", "vy", "weight", "count"} - set(box)
            if missing:
                raise ConfigError(f"plasma box misses {sorted(missing)}", "plasma-box")
        self._boundary_data()
        self._separation()

    def _boundary_data(self):
        raw = self.raw
        if self.flavor is BoundaryFlavor.DIRICHLET:
            # Dirichlet data are zero by definition of the model
            raw["h_N"] = "zero"
            raw["h_cha"] = "zero"
            self.h_N = BoundaryDensity.zero()
            self.h_cha = BoundaryDensity.zero()
            return
        self.h_N = density_from_config(raw["h_N"], self.total_weight, self.domain)
        self.h_cha = density_from_config(raw["h_cha"], float(self.M), self.domain)
        total = self.h_N.total(self.domain)
        if abs(total - self.total_weight) > _COMPAT_TOL:
            raise ConfigError(
                f"plasma weight {self.total_weight:.12g} differs from boundary flux {total:.12g}",
                "neumann-compatibility",
            )
        total_cha = self.h_cha.total(self.domain)
        if abs(total_cha - self.M) > _COMPAT_TOL:
            raise ConfigError(
                f"charge boundary flux {total_cha:.12g} differs from charge count {self.M}",
                "charge-compatibility",
            )
        if self.plasma and self.h_N.minimum() < 0:
            raise ConfigError("h_N must be nonnegative", "neumann-data-sign")

    def _separation(self):
        delta = float(self.raw["delta1"])
        dom = self.domain
        xi = self.xi0()
        if xi.shape[0]:
            inside = dom.contains(xi)
            if not np.all(inside):
                raise ConfigError("charges must start inside the domain", "singular-set-separation")
            _, d = dom.project(xi)
            if np.any(d <= delta):
                raise ConfigError(
                    f"charge within delta1={delta:g} of the boundary", "singular-set-separation"
                )
            for a in range(xi.shape[0]):
                for b in range(a + 1, xi.shape[0]):
                    if np.linalg.norm(xi[a] - xi[b]) <= delta or np.array_equal(xi[a], xi[b]):
                        raise ConfigError("charges closer than delta1", "singular-set-separation")
        for box in self.plasma:
            corners = _box_support(box)
            if not np.all(dom.contains(corners)):
                raise ConfigError("plasma box leaves the domain", "singular-set-separation")
            # the wall distance of a rectangle is attained on its edges
            edge = np.linspace(0, 1, 33)[:, None]
            pts = np.vstack([c0 + edge * (c1 - c0) for c0, c1 in zip(corners, np.roll(corners, -1, 0))])
            _, d = dom.project(pts)
            if np.min(d) <= delta:
                raise ConfigError(
                    f"plasma support within delta1={delta:g} of the boundary", "singular-set-separation"
                )
            for p in xi:
                if _rect_point_distance(box, p) <= delta:
                    raise ConfigError(
                        f"plasma support within delta1={delta:g} of a charge", "singular-set-separation"
                    )

    # serialisation ---------------------------------------------------------
    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def hash(self) -> str:
        """Stable digest of the normalised configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "RunConfig":
        return RunConfig(_merge(self.raw, kwargs))


def parse_config(text: str) -> RunConfig:
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", "config-schema")
    return RunConfig(data)


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())
