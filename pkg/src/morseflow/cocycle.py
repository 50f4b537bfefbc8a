"""Random dynamical systems ``phi(t, omega) x`` on a compact box.

Three kinds are supported:

* ``exact-double-well``: closed-form solution of
  ``dX = (X - X^3) dt + (X - X^3) o dW`` on ``[-1, 1]``;
* ``stratonovich-sde``: polynomial drift/diffusion integrated with a
  Stratonovich Heun scheme of step ``h``;
* ``deterministic-flow``: as above with the noise switched off.

Negative times never integrate backwards; they invert the forward map via
``phi(-t, omega) = phi(t, theta_{-t} omega)^{-1}``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._accel import kernels
from .errors import ConfigurationError, DomainError
from .noise import NoisePath

EXACT = "exact-double-well"
SDE = "stratonovich-sde"
DETERMINISTIC = "deterministic-flow"
KINDS = (EXACT, SDE, DETERMINISTIC)

_BOX_TOL = 1e-12
CLAMP_WARN = 1e-6


@dataclass(frozen=True)
class StateBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or len(lo) not in (1, 2):
            raise ConfigurationError(f"box must be 1-D or 2-D with matching bounds, got {lo} / {hi}")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ConfigurationError(f"box needs lower < upper componentwise, got {lo} / {hi}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def contains(self, X, tol: float = _BOX_TOL) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        return np.all((X >= self.lo - tol) & (X <= self.hi + tol), axis=1)


@dataclass(frozen=True, eq=False)
class PolyField:
    """Polynomial vector field ``f_i(x) = sum_k coef[i,k] prod_j x_j^powers[i,k,j]``."""

    coef: np.ndarray
    powers: np.ndarray
    name: str = ""

    @property
    def dim(self) -> int:
        return self.coef.shape[0]

    @classmethod
    def from_coefficients(cls, coefficients: Sequence[float], name: str = "") -> "PolyField":
        """1-D field from ascending power coefficients ``[c0, c1, c2, ...]``."""
        c = np.asarray(coefficients, dtype=np.float64).reshape(1, -1)
        p = np.arange(c.shape[1], dtype=np.int64).reshape(1, -1, 1)
        return cls(c, p, name)

    @classmethod
    def from_terms(cls, components: Sequence[Sequence[Sequence[float]]], name: str = "") -> "PolyField":
        """Field from per-component term lists ``[[coef, p_1, ..., p_d], ...]``."""
        d = len(components)
        K = max(1, max(len(c) for c in components))
        coef = np.zeros((d, K))
        powers = np.zeros((d, K, d), dtype=np.int64)
        for i, terms in enumerate(components):
            for k, term in enumerate(terms):
                if len(term) != d + 1:
                    raise ConfigurationError(f"term {term} needs 1 coefficient and {d} powers")
                coef[i, k] = term[0]
                if any(int(p) != p or p < 0 for p in term[1:]):
                    raise ConfigurationError(f"powers must be nonnegative integers, got {term[1:]}")
                powers[i, k] = [int(p) for p in term[1:]]
        return cls(coef, powers, name)

    @classmethod
    def zero(cls, dim: int) -> "PolyField":
        return cls(np.zeros((dim, 1)), np.zeros((dim, 1, dim), dtype=np.int64), "zero")

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        mono = np.prod(X[:, None, None, :] ** self.powers[None], axis=-1)
        return np.sum(mono * self.coef[None], axis=-1)

    def describe(self):
        if self.name:
            return self.name
        return {"coef": self.coef.tolist(), "powers": self.powers.tolist()}


# named fields usable from scenario files
FIELD_REGISTRY = {
    "double-well": lambda: PolyField.from_coefficients([0.0, 1.0, 0.0, -1.0], "double-well"),
    "zero-1d": lambda: PolyField.zero(1),
    "linear-contraction": lambda: PolyField.from_coefficients([0.0, -1.0], "linear-contraction"),
    "double-well-2d": lambda: PolyField.from_terms(
        [[[1.0, 1, 0], [-1.0, 3, 0]], [[-1.0, 0, 1]]], "double-well-2d"),
    "double-well-2d-noise": lambda: PolyField.from_terms(
        [[[1.0, 1, 0], [-1.0, 3, 0]], [[0.5, 0, 1], [-0.5, 0, 3]]], "double-well-2d-noise"),
    "zero-2d": lambda: PolyField.zero(2),
}


def named_field(name: str) -> PolyField:
    try:
        return FIELD_REGISTRY[name]()
    except KeyError:
        raise ConfigurationError(f"unknown vector field {name!r}; known: {sorted(FIELD_REGISTRY)}") from None


@dataclass(frozen=True, eq=False)
class CocycleSystem:
    box: StateBox
    kind: str = EXACT
    drift: Optional[PolyField] = None
    diffusion: Optional[PolyField] = None
    h: float = 1e-3
    # running max of clamp magnitudes; mutable on an otherwise frozen system
    _clamp: list = field(default_factory=lambda: [0.0], init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown system kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == EXACT:
            if self.box.lower != (-1.0,) or self.box.upper != (1.0,):
                raise ConfigurationError("the exact double-well lives on the box [-1, 1]")
            return
        if not (self.h > 0):
            raise ConfigurationError(f"integrator step h must be positive, got {self.h}")
        if self.drift is None:
            raise ConfigurationError(f"{self.kind} needs a drift field")
        diffusion = self.diffusion
        if self.kind == DETERMINISTIC or diffusion is None:
            diffusion = PolyField.zero(self.box.dim)
        object.__setattr__(self, "diffusion", diffusion)
        for f in (self.drift, diffusion):
            if f.dim != self.box.dim:
                raise ConfigurationError(f"field dimension {f.dim} does not match box dimension {self.box.dim}")

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def max_clamp(self) -> float:
        return self._clamp[0]

    # ------------------------------------------------------------------ helpers
    def as_points(self, x) -> tuple:
        """Normalize ``x`` to an (m, d) array; returns (array, restore) pair."""
        arr = np.asarray(x, dtype=np.float64)
        d = self.dim
        if arr.ndim == 0:
            if d != 1:
                raise DomainError(f"scalar point given for a {d}-D system")
            return arr.reshape(1, 1), lambda Y: float(Y[0, 0])
        if d == 1 and arr.ndim == 1:
            return arr.reshape(-1, 1), lambda Y: Y[:, 0].copy()
        if arr.ndim == 1 and arr.shape[0] == d:
            return arr.reshape(1, d), lambda Y: Y[0].copy()
        if arr.ndim == 2 and arr.shape[1] == d:
            return arr, lambda Y: Y
        raise DomainError(f"cannot interpret array of shape {arr.shape} as {d}-D points")

    def check_domain(self, X: np.ndarray) -> None:
        inside = self.box.contains(X)
        if not inside.all():
            bad = X[~inside][0]
            raise DomainError(f"point {bad.tolist()} outside state box {self.box.lower}..{self.box.upper}")

    def _clamp_to_box(self, X: np.ndarray) -> np.ndarray:
        Y = np.clip(X, self.box.lo, self.box.hi)
        mag = float(np.max(np.abs(Y - X))) if X.size else 0.0
        if mag > 0:
            self._clamp[0] = max(self._clamp[0], mag)
            if mag > CLAMP_WARN:
                warnings.warn(f"integrator left the state box by {mag:.3g}; clamped", RuntimeWarning, stacklevel=3)
        return Y

    def _nodes(self, a: float, b: float) -> np.ndarray:
        n = max(1, int(math.ceil(abs(b - a) / self.h - 1e-9)))
        return a + (b - a) * np.arange(n + 1) / n

    def _integrate(self, X, a: float, b: float, path: NoisePath) -> np.ndarray:
        """Heun map from path time ``a`` to ``b >= a``."""
        if b == a:
            return X.copy()
        u = self._nodes(a, b)
        W = path.evaluate(u) if self.kind == SDE else np.zeros_like(u)
        return kernels.heun_forward(X, W, (b - a) / (len(u) - 1), self.drift.coef, self.drift.powers,
                                    self.diffusion.coef, self.diffusion.powers)

    def _integrate_inverse(self, Y, a: float, b: float, path: NoisePath) -> np.ndarray:
        """Inverse of the Heun map from ``a`` to ``b >= a``."""
        if b == a:
            return Y.copy()
        u = self._nodes(a, b)
        W = path.evaluate(u) if self.kind == SDE else np.zeros_like(u)
        return kernels.heun_inverse(Y, W, (b - a) / (len(u) - 1), self.drift.coef, self.drift.powers,
                                    self.diffusion.coef, self.diffusion.powers)

    # ------------------------------------------------------------------ core
    def flow_points(self, t: float, path: NoisePath, X: np.ndarray) -> np.ndarray:
        """``phi(t, path)`` applied to an (m, d) array."""
        t = float(t)
        if self.kind == EXACT:
            z = np.array([t + path.evaluate(t)])
            return kernels.double_well_grid(X[:, 0], z)[0].reshape(-1, 1)
        if t == 0:
            return X.copy()
        if t > 0:
            return self._clamp_to_box(self._integrate(X, 0.0, t, path))
        return self._clamp_to_box(self._integrate_inverse(X, t, 0.0, path))

    def flow_times(self, times, path: NoisePath, X: np.ndarray) -> np.ndarray:
        """Positions ``phi(t_k, path) X`` for every ``t_k``; shape (n, m, d).

        For the integrated kinds the orbit is built by composing the cocycle
        between consecutive sorted times (one sweep outwards from 0).
        """
        times = np.asarray(times, dtype=np.float64)
        if self.kind == EXACT:
            z = times + path.evaluate(times)
            return kernels.double_well_grid(X[:, 0], z)[:, :, None]
        out = np.empty((len(times),) + X.shape)
        order = np.argsort(times, kind="stable")
        ts = times[order]
        pos = ts >= 0
        cur, prev = X.copy(), 0.0
        for idx, t in zip(order[pos], ts[pos]):
            cur = self._integrate(cur, prev, t, path)
            prev = t
            out[idx] = cur
        cur, prev = X.copy(), 0.0
        for idx, t in zip(order[~pos][::-1], ts[~pos][::-1]):
            cur = self._integrate_inverse(cur, t, prev, path)
            prev = t
            out[idx] = cur
        return self._clamp_to_box(out.reshape(-1, self.dim)).reshape(out.shape)

    def flow_pairs(self, times, path: NoisePath, X: np.ndarray, start_times=None, start_states=None) -> np.ndarray:
        """``phi(times[i], path) X[i]`` with a separate time per point; shape (m, d).

        For the integrated kinds, ``start_times``/``start_states`` may carry
        already-known orbit points ``phi(s_i, path) X[i]`` to continue from.
        """
        times = np.asarray(times, dtype=np.float64)
        if self.kind == EXACT:
            z = times + path.evaluate(times)
            return kernels.double_well_pairs(np.ascontiguousarray(X[:, 0]), z).reshape(-1, 1)
        out = np.empty_like(X, dtype=np.float64)
        for i in range(X.shape[0]):
            s = 0.0 if start_times is None else float(start_times[i])
            x0 = X[i:i + 1] if start_states is None else start_states[i:i + 1]
            t = float(times[i])
            if t >= s:
                out[i] = self._integrate(x0, s, t, path)[0]
            else:
                out[i] = self._integrate_inverse(x0, t, s, path)[0]
        return self._clamp_to_box(out)

    def pullback(self, times, path: NoisePath, X: np.ndarray) -> np.ndarray:
        """``phi(t, theta_{-t} path) X`` for every ``t``; shape (n, m, d)."""
        times = np.asarray(times, dtype=np.float64)
        if self.kind == EXACT:
            z = times - path.evaluate(-times)
            return kernels.double_well_grid(X[:, 0], z)[:, :, None]
        out = np.empty((len(times),) + X.shape)
        for k, t in enumerate(times):
            # phi(t, theta_{-t} w) integrates the increments of w over [-t, 0]
            if t >= 0:
                out[k] = self._integrate(X, -t, 0.0, path)
            else:
                out[k] = self._integrate_inverse(X, 0.0, -t, path)
        return self._clamp_to_box(out.reshape(-1, self.dim)).reshape(out.shape)

    def pullback_inverse(self, times, path: NoisePath, Y: np.ndarray) -> np.ndarray:
        """``phi(-t, theta_t path) Y = phi(t, path)^{-1} Y`` for every ``t``; shape (n, m, d)."""
        times = np.asarray(times, dtype=np.float64)
        if self.kind == EXACT:
            z = -times - path.evaluate(times)
            return kernels.double_well_grid(Y[:, 0], z)[:, :, None]
        out = np.empty((len(times),) + Y.shape)
        for k, t in enumerate(times):
            if t >= 0:
                out[k] = self._integrate_inverse(Y, 0.0, t, path)
            else:
                out[k] = self._integrate(Y, t, 0.0, path)
        return self._clamp_to_box(out.reshape(-1, self.dim)).reshape(out.shape)

    def describe(self) -> dict:
        d = {"kind": self.kind, "box": {"lower": list(self.box.lower), "upper": list(self.box.upper)}}
        if self.kind != EXACT:
            d["h"] = self.h
            d["drift"] = self.drift.describe()
            if self.kind == SDE:
                d["diffusion"] = self.diffusion.describe()
        return d


def double_well(kind: str = EXACT, h: float = 1e-3) -> CocycleSystem:
    """The double-well system on ``[-1, 1]`` in exact or integrated form."""
    box = StateBox((-1.0,), (1.0,))
    if kind == EXACT:
        return CocycleSystem(box, EXACT)
    f = named_field("double-well")
    return CocycleSystem(box, kind, f, f if kind == SDE else None, h)


def make_system(descriptor: dict) -> CocycleSystem:
    """Build a system from a scenario descriptor (see the scenario schema)."""
    problems = []
    kind = descriptor.get("kind", EXACT)
    if kind not in KINDS:
        problems.append(f"system.kind must be one of {KINDS}, got {kind!r}")
    box_d = descriptor.get("box", {"lower": [-1.0], "upper": [1.0]})
    try:
        box = StateBox(tuple(box_d["lower"]), tuple(box_d["upper"]))
    except (KeyError, TypeError) as exc:
        problems.append(f"system.box needs lower and upper lists ({exc})")
        box = None
    except ConfigurationError as exc:
        problems.extend(exc.problems)
        box = None
    if problems:
        raise ConfigurationError("invalid system descriptor", problems)
    if kind == EXACT:
        return CocycleSystem(box, EXACT)

    def field_of(spec, role):
        if spec is None:
            return None
        if isinstance(spec, str):
            return named_field(spec)
        if "coefficients" in spec:
            return PolyField.from_coefficients(spec["coefficients"])
        if "terms" in spec:
            return PolyField.from_terms(spec["terms"])
        raise ConfigurationError(f"system.{role} must be a registry name, coefficients or terms")

    return CocycleSystem(box, kind, field_of(descriptor.get("drift"), "drift"),
                         field_of(descriptor.get("diffusion"), "diffusion"),
                         float(descriptor.get("h", 1e-3)))


# ---------------------------------------------------------------------- operations
def flow(sys: CocycleSystem, t: float, path: NoisePath, x):
    """``phi(t, omega) x`` for a point (scalar in 1-D) or an array of points."""
    X, restore = sys.as_points(x)
    sys.check_domain(X)
    return restore(sys.flow_points(t, path, X))


def inverse_flow(sys: CocycleSystem, t: float, path: NoisePath, y):
    """``phi(t, omega)^{-1} y``, computed as ``phi(-t, theta_t omega) y``."""
    X, restore = sys.as_points(y)
    sys.check_domain(X)
    if t == 0:
        return restore(X.copy())
    return restore(sys.flow_points(-t, path.shift(t), X))


def cocycle_residual(sys: CocycleSystem, t: float, s: float, path: NoisePath, x) -> float:
    """Distance between ``phi(t+s, w) x`` and ``phi(t, theta_s w) phi(s, w) x`` (max over points)."""
    X, _ = sys.as_points(x)
    sys.check_domain(X)
    direct = sys.flow_points(t + s, path, X)
    composed = sys.flow_points(t, path.shift(s), sys.flow_points(s, path, X))
    return float(np.max(np.linalg.norm(direct - composed, axis=1)))
