"""Poincare-ball (gyrovector) operations with boundary and origin safeguards.

The ball of curvature parameter ``c >= 0`` is the set ``{x : c * ||x||^2 < 1}``;
``c = 0`` degenerates to flat Euclidean space and every operation below then
reduces to its Euclidean counterpart.  The conformal factor is
``lambda_x = 2 / (1 - c * ||x||^2)``.

Core formulas, acting on the last axis so batched inputs work:

* Mobius addition
  ``x (+) y = ((1 + 2c<x,y> + c|y|^2) x + (1 - c|x|^2) y) / (1 + 2c<x,y> + c^2 |x|^2 |y|^2)``
* exp/log maps at a base point and their compact origin versions
* parallel transport from the origin, defined through exp/log
* Mobius matrix-vector product and scalar product
* Mobius pointwise nonlinearity ``f^(x) = exp0(f(log0(x)))``

All functions run on plain numpy arrays or on autodiff ``Node`` inputs
(see :mod:`hypervmc.autodiff`); degenerate inputs (zero tangents, zero
matvec results) fall back to their exact first-order limits so outputs and
gradients stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import atanh, clamp_min, norm, straight_through, sum_last, tanh, value_of

BALL_EPS = 1e-5       # boundary margin: norms are kept <= (1 - BALL_EPS)/sqrt(c)
TINY_NORM = 1e-12     # below this, first-order Taylor limits are used


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class BallPoint:
    """A point strictly inside the Poincare ball of curvature ``c``."""

    coords: np.ndarray
    c: float = 1.0

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if not np.all(np.isfinite(coords)):
            raise ValueError("BallPoint coordinates must be finite")
        if self.c < 0:
            raise ValueError("curvature parameter must be >= 0")
        if self.c > 0 and self.c * float(coords @ coords) >= 1.0:
            raise ValueError("point lies outside the open ball")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return self.coords.shape[-1]


@dataclass(frozen=True)
class TangentVector:
    """A tangent vector attached to ``base`` (the origin for the *0 maps)."""

    coords: np.ndarray
    base: BallPoint

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.shape[-1] != self.base.dim:
            raise ValueError("tangent dimension differs from base dimension")
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return self.coords.shape[-1]


def _check_pair(x: BallPoint, y: BallPoint):
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    if x.c != y.c:
        raise ValueError(f"curvature mismatch: {x.c} vs {y.c}")


# ---------------------------------------------------------------------------
# array-level core (autodiff-transparent)

def _sq(x):
    return sum_last(x * x)


def mobius_add_raw(x, y, c: float):
    if c == 0.0:
        return x + y
    x2 = _sq(x)
    y2 = _sq(y)
    xy = sum_last(x * y)
    num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y
    den = 1.0 + 2.0 * c * xy + c * c * x2 * y2
    return num / den


def lambda_factor(x, c: float):
    """Conformal factor 2 / (1 - c * ||x||^2), keepdims along the last axis."""
    return 2.0 / (1.0 - c * _sq(x))


def exp0_raw(v, c: float):
    if c == 0.0:
        return v * 1.0
    vn = norm(v)
    if np.max(value_of(vn)) < TINY_NORM:
        return v * 1.0
    sc = math.sqrt(c)
    vn = clamp_min(vn, TINY_NORM)
    return tanh(sc * vn) * v / (sc * vn)


def log0_raw(y, c: float):
    if c == 0.0:
        return y * 1.0
    yn = norm(y)
    if np.max(value_of(yn)) < TINY_NORM:
        return y * 1.0
    sc = math.sqrt(c)
    yn = clamp_min(yn, TINY_NORM)
    return atanh(sc * yn) * y / (sc * yn)


def expmap_raw(x, v, c: float):
    if c == 0.0:
        return x + v
    vn = norm(v)
    if np.max(value_of(vn)) < TINY_NORM:
        # exp_x(v) ~ x (+) (lambda_x/2) v to first order in v
        return mobius_add_raw(x, v / (1.0 - c * _sq(x)), c)
    sc = math.sqrt(c)
    vn = clamp_min(vn, TINY_NORM)
    lam = lambda_factor(x, c)
    w = tanh(sc * lam * vn / 2.0) * v / (sc * vn)
    return mobius_add_raw(x, w, c)


def logmap_raw(x, y, c: float):
    if c == 0.0:
        return y - x
    w = mobius_add_raw(-1.0 * x, y, c)
    wn = norm(w)
    if np.max(value_of(wn)) < TINY_NORM:
        return (1.0 - c * _sq(x)) * w
    sc = math.sqrt(c)
    wn = clamp_min(wn, TINY_NORM)
    return ((1.0 - c * _sq(x)) / sc) * atanh(sc * wn) * w / wn


def ptransp0_raw(x, v, c: float):
    if c == 0.0:
        return v * 1.0
    return logmap_raw(x, mobius_add_raw(x, exp0_raw(v, c), c), c)


def mobius_matvec_applied_raw(mx, x, c: float):
    """Mobius product of a matrix with ``x`` given the plain product ``mx``.

    The formula only sees the matrix through ``M x``, which lets gated cells
    use per-sample diagonal matrices without materializing them.
    """
    if c == 0.0:
        return mx * 1.0
    xn = norm(x)
    if np.max(value_of(xn)) < TINY_NORM:
        # W (x) x ~ W x near the origin
        return mx * 1.0
    sc = math.sqrt(c)
    xn = clamp_min(xn, TINY_NORM)
    mxn = norm(mx)
    if np.max(value_of(mxn)) < TINY_NORM:
        # annihilation limit, kept differentiable through mx
        return mx * (atanh(sc * xn) / (sc * xn))
    mxn = clamp_min(mxn, TINY_NORM)
    return tanh((mxn / xn) * atanh(sc * xn)) * mx / (sc * mxn)


def mobius_matvec_raw(w, x, c: float):
    return mobius_matvec_applied_raw(ad.linear(x, w), x, c)


def mobius_scalar_mul_raw(r: float, x, c: float):
    if c == 0.0:
        return r * x
    xn = norm(x)
    if np.max(value_of(xn)) < TINY_NORM:
        return r * x
    sc = math.sqrt(c)
    xn = clamp_min(xn, TINY_NORM)
    return tanh(r * atanh(sc * xn)) * x / (sc * xn)


def mobius_pointwise_raw(f, x, c: float):
    return exp0_raw(f(log0_raw(x, c)), c)


def project_raw(x, c: float, eps: float = BALL_EPS):
    """Rescale any row with sqrt(c)*||x|| >= 1 - eps back to the margin."""
    if c == 0.0:
        return value_of(x) if not ad.is_node(x) else x

    limit = (1.0 - eps) / math.sqrt(c)

    def fix(arr):
        n = np.sqrt(np.sum(arr * arr, axis=-1, keepdims=True))
        factor = np.where(n > limit, limit / np.maximum(n, TINY_NORM), 1.0)
        return arr * factor

    return straight_through(x, fix)


def projection_hits(x, c: float, eps: float = BALL_EPS) -> int:
    """How many rows of ``x`` the projection would actually rescale."""
    if c == 0.0:
        return 0
    arr = value_of(x)
    n = np.sqrt(np.sum(arr * arr, axis=-1))
    return int(np.count_nonzero(n > (1.0 - eps) / math.sqrt(c)))


# ---------------------------------------------------------------------------
# public BallPoint API

def mobius_add(x: BallPoint, y: BallPoint) -> BallPoint:
    """Gyrovector addition; identity at the origin, left inverse at -x."""
    _check_pair(x, y)
    out = mobius_add_raw(x.coords, y.coords, x.c)
    return BallPoint(project_raw(out, x.c), x.c)


def mobius_scalar_mul(r: float, x: BallPoint) -> BallPoint:
    out = mobius_scalar_mul_raw(float(r), x.coords, x.c)
    return BallPoint(project_raw(out, x.c), x.c)


def exp_map(x: BallPoint, v: TangentVector) -> BallPoint:
    out = expmap_raw(x.coords, v.coords, x.c)
    return BallPoint(project_raw(out, x.c), x.c)


def log_map(x: BallPoint, y: BallPoint) -> TangentVector:
    _check_pair(x, y)
    return TangentVector(logmap_raw(x.coords, y.coords, x.c), x)


def exp_map0(v: np.ndarray, c: float = 1.0) -> BallPoint:
    out = exp0_raw(np.asarray(v, dtype=np.float64), c)
    return BallPoint(project_raw(out, c), c)


def log_map0(y: BallPoint) -> TangentVector:
    origin = BallPoint(np.zeros_like(y.coords), y.c)
    return TangentVector(log0_raw(y.coords, y.c), origin)


def parallel_transport0(x: BallPoint, v: TangentVector) -> TangentVector:
    """Transport a tangent vector based at the origin to the tangent space at x."""
    if v.coords.shape[-1] != x.dim:
        raise ValueError("dimension mismatch in transport")
    return TangentVector(ptransp0_raw(x.coords, v.coords, x.c), x)


def mobius_matvec(w: np.ndarray, x: BallPoint) -> BallPoint:
    w = np.asarray(w, dtype=np.float64)
    if w.shape[-1] != x.dim:
        raise ValueError(f"matrix columns {w.shape[-1]} != point dimension {x.dim}")
    out = mobius_matvec_raw(w, x.coords, x.c)
    return BallPoint(project_raw(out, x.c), x.c)


def mobius_pointwise(f, x: BallPoint) -> BallPoint:
    out = mobius_pointwise_raw(f, x.coords, x.c)
    return BallPoint(project_raw(out, x.c), x.c)


def project_to_ball(x: np.ndarray, c: float = 1.0, eps: float = BALL_EPS) -> BallPoint:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot project non-finite coordinates")
    return BallPoint(project_raw(arr, c, eps), c)


# ---------------------------------------------------------------------------
# randomized property suite (used by tests and the geometry-check command)

@dataclass
class GeometryReport:
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v["ok"] for v in self.checks.values())

    def lines(self):
        for name, rec in self.checks.items():
            status = "pass" if rec["ok"] else "FAIL"
            yield f"{status}  {name}: max_err={rec['max_err']:.3e} (tol {rec['tol']:.1e})"


def _rand_ball(rng, dim, c, scale=0.5):
    v = rng.standard_normal(dim)
    v *= scale * rng.random() / max(np.linalg.norm(v), 1e-12)
    return BallPoint(v / math.sqrt(c) if c > 0 else v, c)


def run_geometry_checks(n: int = 1000, dim: int = 5, c: float = 1.0, seed: int = 7) -> GeometryReport:
    """Randomized verification of the gyrovector identities.

    Runs ``n`` draws per identity: left inverse, identity element, exp/log
    roundtrip, scalar-mul vs exp/log composition, the transport relation,
    the ball invariant under near-boundary fuzz, and the flat-limit slope
    of Mobius addition.
    """
    rng = np.random.default_rng(seed)
    report = GeometryReport()

    def record(name, max_err, tol):
        report.checks[name] = {"max_err": float(max_err), "tol": tol, "ok": bool(max_err <= tol)}

    err = 0.0
    for _ in range(n):
        x = _rand_ball(rng, dim, c)
        neg = BallPoint(-x.coords, c)
        err = max(err, float(np.linalg.norm(mobius_add(neg, x).coords)))
        err = max(err, float(np.linalg.norm(mobius_add(x, neg).coords)))
    record("mobius_add_inverse", err, 1e-10)

    err = 0.0
    origin = BallPoint(np.zeros(dim), c)
    for _ in range(n):
        y = _rand_ball(rng, dim, c)
        err = max(err, float(np.linalg.norm(mobius_add(origin, y).coords - y.coords)))
    record("mobius_add_identity", err, 1e-12)

    err = 0.0
    for _ in range(n):
        x = _rand_ball(rng, dim, c)
        v = TangentVector(rng.standard_normal(dim) * rng.random(), x)
        y = exp_map(x, v)
        back = log_map(x, y)
        err = max(err, float(np.linalg.norm(back.coords - v.coords)))
    record("exp_log_roundtrip", err, 1e-9)

    err = 0.0
    for _ in range(n):
        x = _rand_ball(rng, dim, c)
        r = rng.uniform(-3, 3)
        lhs = mobius_scalar_mul(r, x)
        rhs = exp_map0(r * log_map0(x).coords, c)
        err = max(err, float(np.linalg.norm(lhs.coords - rhs.coords)))
    record("scalar_mul_exp_log", err, 1e-10)

    err = 0.0
    for _ in range(n):
        x = _rand_ball(rng, dim, c)
        b = _rand_ball(rng, dim, c)
        lhs = mobius_add(x, b)
        rhs = exp_map(x, parallel_transport0(x, log_map0(b)))
        err = max(err, float(np.linalg.norm(lhs.coords - rhs.coords)))
    record("transport_relation", err, 1e-9)

    worst = 0.0
    for _ in range(n):
        u = rng.standard_normal(dim)
        u *= (1.0 - 1e-7) / (math.sqrt(c) * np.linalg.norm(u))
        x = project_to_ball(u * rng.uniform(0.999, 1.2), c)
        y = _rand_ball(rng, dim, c, scale=0.9)
        out = mobius_add(x, y)
        worst = max(worst, math.sqrt(c) * float(np.linalg.norm(out.coords)))
    record("ball_invariant_fuzz", worst, 1.0 - BALL_EPS + 1e-12)

    # flat limit: || (x (+)_c y) - (x + y) || should scale linearly with c
    slopes = []
    for _ in range(n):
        xv = rng.standard_normal(dim)
        yv = rng.standard_normal(dim)
        errs = []
        for cc in (1e-3, 1e-4):
            out = mobius_add_raw(xv, yv, cc)
            errs.append(np.linalg.norm(out - (xv + yv)))
        if errs[1] > 1e-14:
            slopes.append(math.log10(errs[0] / errs[1]))
    slope = float(np.median(slopes))
    record("flat_limit_slope", abs(slope - 1.0), 0.25)

    return report
