"""Scalar coefficient fields a(x) and their piecewise-constant sampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import CoefficientError, ConfigurationError

__all__ = ["CoeffSpec", "CellCoeffs", "evaluate", "sample", "RNG_ALGORITHMS"]

# Algorithm identifiers accepted for seeded fields.  The identifier is part of
# the config so a realization can be regenerated exactly.
RNG_ALGORITHMS = {"numpy-pcg64": np.random.PCG64}

_TRIG_EPS = (1 / 5, 1 / 13, 1 / 17, 1 / 31, 1 / 65)


@dataclass(frozen=True)
class CoeffSpec:
    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("constant", "trig_multiscale_2d", "random_fourier_1d", "checkerboard")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown coefficient kind {self.kind!r}", field="coeff.kind")
        if self.kind == "random_fourier_1d":
            rng = self.params.get("rng", "numpy-pcg64")
            if rng not in RNG_ALGORITHMS:
                raise ConfigurationError(f"unknown generator {rng!r}", field="coeff.rng")
            if "seed" not in self.params:
                raise ConfigurationError("random_fourier_1d needs a seed", field="coeff.seed")

    @classmethod
    def constant(cls, value=1.0):
        return cls("constant", {"value": float(value)})

    @classmethod
    def trig_multiscale_2d(cls):
        return cls("trig_multiscale_2d")

    @classmethod
    def random_fourier_1d(cls, seed, K=20, alpha=1.0, rng="numpy-pcg64"):
        return cls("random_fourier_1d", {"seed": int(seed), "K": int(K),
                                         "alpha": float(alpha), "rng": rng})

    @classmethod
    def checkerboard(cls, contrast=100.0, period=4):
        return cls("checkerboard", {"contrast": float(contrast), "period": int(period)})

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CoeffSpec":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind is None:
            raise ConfigurationError("missing 'kind'", field="coeff")
        if kind == "random_fourier_1d":
            return cls.random_fourier_1d(**d)
        if kind == "checkerboard":
            return cls.checkerboard(**d)
        if kind == "constant":
            return cls.constant(**d)
        return cls(kind, d)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    def fourier_coefficients(self):
        """The two uniform(-1/2, 1/2) vectors of length K, drawn once per seed."""
        p = self.params
        gen = np.random.Generator(RNG_ALGORITHMS[p.get("rng", "numpy-pcg64")](p["seed"]))
        K = p.get("K", 20)
        zeta1 = gen.uniform(-0.5, 0.5, K)
        zeta2 = gen.uniform(-0.5, 0.5, K)
        return zeta1, zeta2


def _trig(x, y):
    e1, e2, e3, e4, e5 = _TRIG_EPS
    tp = 2 * np.pi
    return (1 / 6) * (
        (1.1 + np.sin(tp * x / e1)) / (1.1 + np.sin(tp * y / e1))
        + (1.1 + np.sin(tp * y / e2)) / (1.1 + np.cos(tp * x / e2))
        + (1.1 + np.cos(tp * x / e3)) / (1.1 + np.sin(tp * y / e3))
        + (1.1 + np.sin(tp * y / e4)) / (1.1 + np.cos(tp * x / e4))
        + (1.1 + np.cos(tp * x / e5)) / (1.1 + np.sin(tp * y / e5))
        + np.sin(4 * x**2 * y**2)
        + 1
    )


def _random_fourier(spec, x):
    zeta1, zeta2 = spec.fourier_coefficients()
    alpha = spec.params.get("alpha", 1.0)
    k = np.arange(1, len(zeta1) + 1, dtype=float)
    kx = np.multiply.outer(x, k)
    s = (k**-alpha * (zeta1 * np.sin(kx) + zeta2 * np.cos(kx))).sum(axis=-1)
    return 1 + 0.5 * np.sin(s)


def _checkerboard(spec, pts):
    period = spec.params.get("period", 4)
    contrast = spec.params.get("contrast", 100.0)
    idx = np.floor(np.clip(pts, 0, 1 - 1e-15) * period).astype(int).sum(axis=-1)
    return np.where(idx % 2 == 0, 1.0, contrast)


def evaluate(spec: CoeffSpec, point) -> np.ndarray | float:
    """Evaluate a(x) at one point or an (n, d) array of points."""
    pts = np.asarray(point, dtype=float)
    scalar = pts.ndim <= 1
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts[None, :]
    if spec.kind == "constant":
        out = np.full(len(pts), spec.params.get("value", 1.0))
    elif spec.kind == "trig_multiscale_2d":
        if pts.shape[1] != 2:
            raise ConfigurationError("trig_multiscale_2d is a 2D field", field="coeff.kind")
        out = _trig(pts[:, 0], pts[:, 1])
    elif spec.kind == "random_fourier_1d":
        if pts.shape[1] != 1:
            raise ConfigurationError("random_fourier_1d is a 1D field", field="coeff.kind")
        out = _random_fourier(spec, pts[:, 0])
    else:
        out = _checkerboard(spec, pts)
    return float(out[0]) if scalar else out


@dataclass(frozen=True, eq=False)
class CellCoeffs:
    """One coefficient value per fine cell."""

    values: np.ndarray
    spec: CoeffSpec | None = None

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def lambda_min(self) -> float:
        return float(self.values.min())

    @property
    def lambda_max(self) -> float:
        return float(self.values.max())


def sample(spec: CoeffSpec, mesh) -> CellCoeffs:
    """Sample ``spec`` at the barycentre of every cell of ``mesh``."""
    values = np.asarray(evaluate(spec, mesh.barycenters()), dtype=float)
    if not np.all(values > 0):
        bad = int(np.argmin(values))
        raise CoefficientError(f"coefficient {spec.kind} is non-positive ({values[bad]:g}) "
                               f"in cell {bad}")
    return CellCoeffs(values, spec)
