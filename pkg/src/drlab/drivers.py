"""Driver functions for the two-parameter recursion.

A *driver* is a nonnegative, nondecreasing function ``psi`` normalized so
that ``psi(0) = psi'(0) = 1``.  It fully parameterizes the recursion

    u_{n+1} = u_n * psi(v_{n+1}),    v_{n+1} = u_n + v_n,

and therefore every quantity computed in this package: phase labels, the
critical curve, free energies and the scaling experiments.

Built-in drivers
----------------
``affine``        psi(x) = 1 + x.  Unbounded; only valid for computations
                  that never need psi(inf) (the simplified blow-up system).
``fig1``          psi(x) = (1 + x + sqrt(1 + 2x)) / 2 on [-1/2, inf).  Its
                  critical curve is exactly x^2/2, which makes it the
                  reference fixture for curve solvers.  Evaluated in this
                  cancellation-free form; the textbook form
                  x^2 / (2(1 + x - sqrt(1+2x))) is identical away from the
                  removable singularity at 0.
``fig1-clamped``  fig1 frozen at its value for x >= 1/2.  Bounded but only
                  C^0 at the clamp point; for experiments that require a
                  finite limit at infinity.
``lf``            derived from the linear-fractional solvable model: with
                  ``psi_base(x) = pgf_Z(x/(x+1)) / p`` and xi the root of
                  ``psi_base(xi) = 1``, the driver is
                  ``psi(x) = psi_base(x/psi_base'(xi) + xi)``.
``clf``           continuous analogue via the Laplace transform:
                  ``gamma(th) = E exp(-Z/th) / p``, tau the root of
                  ``gamma(tau) = 1``, ``psi(x) = gamma(x/gamma'(tau) + tau)``.

Every driver carries a fast scalar path (plain ``math``) and a vectorized
path (numpy); orbit iteration uses the former, grid solvers the latter.
Driver objects are immutable and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, NumericError

__all__ = [
    "PsiFunction",
    "ZSpecDiscrete",
    "ZSpecContinuous",
    "ModelConstants",
    "make_affine_psi",
    "make_fig1_psi",
    "make_fig1_clamped_psi",
    "make_lf_psi",
    "make_clf_psi",
    "make_custom_psi",
    "dual_psi",
    "central_difference",
    "driver_from_spec",
    "parse_driver_string",
]


# ---------------------------------------------------------------------------
# driver object
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsiFunction:
    """An evaluable driver with derivative, limit at +inf and domain bounds.

    ``fn``/``deriv_fn`` take and return python floats; ``array_fn`` /
    ``array_deriv_fn`` operate on numpy arrays.  The domain is the closed
    interval [domain_min, domain_max]; evaluation outside raises
    :class:`DomainError`.  ``psi_inf`` is the limit at +inf (``math.inf``
    for unbounded drivers) and is returned for ``x = +inf``.
    """

    name: str
    fn: Callable[[float], float]
    deriv_fn: Callable[[float], float]
    array_fn: Callable[[np.ndarray], np.ndarray]
    array_deriv_fn: Callable[[np.ndarray], np.ndarray]
    psi_inf: float
    domain_min: float = -math.inf
    domain_max: float = math.inf
    bounded: bool = False

    def __call__(self, x):
        if type(x) is float or isinstance(x, (float, int)):
            x = float(x)
            if x != x or x < self.domain_min or x > self.domain_max:
                raise DomainError(
                    f"{self.name}: x={x!r} outside domain "
                    f"[{self.domain_min}, {self.domain_max}]")
            if x == math.inf:
                return self.psi_inf
            return self.fn(x)
        return self._array_eval(x, self.array_fn, self.psi_inf)

    def deriv(self, x):
        if isinstance(x, float) or isinstance(x, int):
            x = float(x)
            if x != x or x < self.domain_min or x > self.domain_max:
                raise DomainError(
                    f"{self.name}: x={x!r} outside domain "
                    f"[{self.domain_min}, {self.domain_max}]")
            if x == math.inf:
                return 0.0 if self.bounded else self.deriv_fn(x)
            return self.deriv_fn(x)
        limit = 0.0 if self.bounded else math.inf
        return self._array_eval(x, self.array_deriv_fn, limit)

    def _array_eval(self, x, f, inf_value):
        arr = np.asarray(x, dtype=float)
        if arr.size:
            if np.isnan(arr).any():
                raise DomainError(f"{self.name}: nan input")
            lo = float(np.min(arr))
            hi = float(np.max(arr))
            if lo < self.domain_min or hi > self.domain_max:
                raise DomainError(
                    f"{self.name}: input range [{lo}, {hi}] outside domain "
                    f"[{self.domain_min}, {self.domain_max}]")
        mask = np.isposinf(arr)
        if mask.any():
            out = np.asarray(f(np.where(mask, 0.0, arr)), dtype=float)
            out = np.where(mask, inf_value, out)
        else:
            out = np.asarray(f(arr), dtype=float)
        return out


def central_difference(fn: Callable[[float], float], x: float,
                       h: float = 1e-6) -> float:
    """Symmetric difference quotient, the fallback derivative for
    user-supplied drivers without an analytic one."""
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


# ---------------------------------------------------------------------------
# subtraction-term specifications
# ---------------------------------------------------------------------------

def _validate_atoms(atoms, *, integer: bool) -> tuple:
    out = []
    total = 0.0
    seen = set()
    for value, prob in atoms:
        v = float(value)
        p = float(prob)
        if integer:
            if v != int(v) or v < 1:
                raise ConfigError(f"atom value {value!r} is not a positive integer")
            v = float(int(v))
        elif not (v > 0.0 and math.isfinite(v)):
            raise ConfigError(f"atom value {value!r} is not a positive real")
        if v in seen:
            raise ConfigError(f"duplicate atom value {value!r}")
        seen.add(v)
        if not (0.0 < p <= 1.0):
            raise ConfigError(f"atom probability {prob!r} not in (0, 1]")
        out.append((v, p))
        total += p
    if not out:
        raise ConfigError("atom list is empty")
    if abs(total - 1.0) > 1e-12:
        raise ConfigError(f"atom probabilities sum to {total!r}, expected 1")
    return tuple(out)


@dataclass(frozen=True)
class ZSpecDiscrete:
    """Finite-support law of the subtraction term Z on {1, 2, ...}.

    Keeping the support finite makes the probability generating function
    and its derivative exact finite sums.
    """

    atoms: tuple

    def __post_init__(self):
        object.__setattr__(self, "atoms", _validate_atoms(self.atoms, integer=True))

    def pgf(self, s):
        """E[s^Z]; accepts floats or arrays."""
        return sum(p * s ** int(v) for v, p in self.atoms)

    def pgf_prime(self, s):
        return sum(p * v * s ** (int(v) - 1) for v, p in self.atoms)

    def values_probs(self) -> tuple[np.ndarray, np.ndarray]:
        vals = np.array([v for v, _ in self.atoms])
        probs = np.array([p for _, p in self.atoms])
        return vals, probs


@dataclass(frozen=True)
class ZSpecContinuous:
    """Finite-support law of the subtraction term Z on (0, inf)."""

    atoms: tuple

    def __post_init__(self):
        object.__setattr__(self, "atoms", _validate_atoms(self.atoms, integer=False))

    def laplace(self, mu):
        """E[exp(-mu Z)]; accepts floats or arrays."""
        if isinstance(mu, float) or isinstance(mu, int):
            return sum(p * math.exp(-mu * v) for v, p in self.atoms)
        return sum(p * np.exp(-mu * v) for v, p in self.atoms)

    def values_probs(self) -> tuple[np.ndarray, np.ndarray]:
        vals = np.array([v for v, _ in self.atoms])
        probs = np.array([p for _, p in self.atoms])
        return vals, probs


@dataclass(frozen=True)
class ModelConstants:
    """Normalizing constants of a solvable model.

    ``root`` is xi (linear-fractional, root of psi_base = 1) or tau
    (continuous variant, root of gamma = 1); ``slope`` is the derivative of
    the normalizing function at that root.  The driver's domain starts at
    ``-root * slope``.
    """

    p: float
    root: float
    slope: float


# ---------------------------------------------------------------------------
# root finding
# ---------------------------------------------------------------------------

def _bisect_root(f: Callable[[float], float], lo: float = 1e-8, hi: float = 1.0,
                 tol: float = 1e-13, max_iter: int = 200) -> float:
    """Root of an increasing function with f(root) = 0.

    Brackets by doubling ``hi`` (monotonicity guarantees a bracket exists),
    then plain bisection to absolute tolerance ``tol``.
    """
    flo = f(lo)
    if flo > 0.0:
        raise NumericError("no sign change: f(lo) > 0 for increasing f")
    for _ in range(1024):
        if f(hi) > 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise NumericError("bracketing failed: f stays nonpositive")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            return mid
        if f(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    raise NumericError(f"bisection did not reach tol={tol} in {max_iter} iterations")


# ---------------------------------------------------------------------------
# built-in drivers
# ---------------------------------------------------------------------------

def make_affine_psi() -> PsiFunction:
    """psi(x) = 1 + x on [-1, inf).

    Unbounded, so unusable wherever psi(inf) enters (free energies); it is
    the exact driver of the simplified blow-up system.
    """
    return PsiFunction(
        name="affine",
        fn=lambda x: 1.0 + x,
        deriv_fn=lambda x: 1.0,
        array_fn=lambda x: 1.0 + x,
        array_deriv_fn=lambda x: np.ones_like(x),
        psi_inf=math.inf,
        domain_min=-1.0,
        bounded=False,
    )


def _fig1_fn(x: float) -> float:
    return 0.5 * (1.0 + x + math.sqrt(1.0 + 2.0 * x))


def _fig1_deriv(x: float) -> float:
    r = math.sqrt(1.0 + 2.0 * x)
    if r == 0.0:
        return math.inf
    return 0.5 * (1.0 + 1.0 / r)


def _fig1_array(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + x + np.sqrt(1.0 + 2.0 * x))


def _fig1_array_deriv(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 0.5 * (1.0 + 1.0 / np.sqrt(1.0 + 2.0 * x))


def make_fig1_psi() -> PsiFunction:
    """The reference driver whose critical curve is exactly x^2/2.

    The closed form (1 + x + sqrt(1 + 2x))/2 removes the 0/0 singularity of
    the quotient form at x = 0 and is immune to cancellation near it.
    Defined on [-1/2, inf) and left unbounded; experiments that need a
    finite psi(inf) use :func:`make_fig1_clamped_psi`.
    """
    return PsiFunction(
        name="fig1",
        fn=_fig1_fn,
        deriv_fn=_fig1_deriv,
        array_fn=_fig1_array,
        array_deriv_fn=_fig1_array_deriv,
        psi_inf=math.inf,
        domain_min=-0.5,
        bounded=False,
    )


def make_fig1_clamped_psi() -> PsiFunction:
    """fig1 frozen at its x = 1/2 value for all x >= 1/2.

    Bounded (the tail is exactly constant) but only C^0 at the clamp point;
    the derivative jumps to 0 there.
    """
    cap = _fig1_fn(0.5)
    return PsiFunction(
        name="fig1-clamped",
        fn=lambda x: _fig1_fn(x) if x < 0.5 else cap,
        deriv_fn=lambda x: _fig1_deriv(x) if x < 0.5 else 0.0,
        array_fn=lambda x: _fig1_array(np.minimum(x, 0.5)),
        array_deriv_fn=lambda x: np.where(x < 0.5, _fig1_array_deriv(np.minimum(x, 0.5)), 0.0),
        psi_inf=cap,
        domain_min=-0.5,
        bounded=True,
    )


def make_lf_psi(p: float, z: ZSpecDiscrete) -> tuple[PsiFunction, ModelConstants]:
    """Driver of the linear-fractional solvable model.

    psi_base(x) = pgf_Z(x/(x+1)) / p is strictly increasing from 0 to 1/p,
    so the normalizing root xi of psi_base(xi) = 1 exists and is unique; it
    is found by doubling + bisection.  The returned driver has
    psi(inf) = 1/p and domain minimum -psi_base'(xi) * xi.
    """
    if not (0.0 < p < 1.0):
        raise ConfigError(f"p={p!r} not in (0, 1)")
    if not isinstance(z, ZSpecDiscrete):
        raise ConfigError("lf driver needs a ZSpecDiscrete")
    inv_p = 1.0 / p
    pairs = tuple((int(v), pr) for v, pr in z.atoms)

    if len(pairs) == 1:
        # single atom: the pgf is a monomial; this path sits inside every
        # orbit step, so skip the generic accumulation loop
        k0, p0 = pairs[0]
        if k0 == 1:
            def pgf_scalar(s: float) -> float:
                return p0 * s

            def pgf_prime_scalar(s: float) -> float:
                return p0
        else:
            def pgf_scalar(s: float) -> float:
                return p0 * s ** k0

            def pgf_prime_scalar(s: float) -> float:
                return p0 * k0 * s ** (k0 - 1)
    else:
        def pgf_scalar(s: float) -> float:
            acc = 0.0
            for k, pr in pairs:
                acc += pr * s ** k
            return acc

        def pgf_prime_scalar(s: float) -> float:
            acc = 0.0
            for k, pr in pairs:
                acc += pr * k * s ** (k - 1)
            return acc

    def psi_base(x: float) -> float:
        return pgf_scalar(x / (x + 1.0)) * inv_p

    def psi_base_prime(x: float) -> float:
        return pgf_prime_scalar(x / (x + 1.0)) / (p * (x + 1.0) ** 2)

    xi = _bisect_root(lambda x: psi_base(x) - 1.0)
    slope = psi_base_prime(xi)
    if not slope > 0.0:
        raise NumericError("derivative at the normalizing root is not positive")
    inv_slope = 1.0 / slope

    def fn(x: float) -> float:
        y = x * inv_slope + xi
        if y <= 0.0:
            return 0.0
        if y == math.inf:
            return inv_p
        return pgf_scalar(y / (y + 1.0)) * inv_p

    def deriv_fn(x: float) -> float:
        y = x * inv_slope + xi
        if y < 0.0:
            y = 0.0
        if y == math.inf:
            return 0.0
        return pgf_prime_scalar(y / (y + 1.0)) / (p * (y + 1.0) ** 2) * inv_slope

    def array_fn(x: np.ndarray) -> np.ndarray:
        y = np.maximum(x * inv_slope + xi, 0.0)
        with np.errstate(invalid="ignore"):
            s = np.where(np.isposinf(y), 1.0, y / (y + 1.0))
        return z.pgf(s) * inv_p

    def array_deriv_fn(x: np.ndarray) -> np.ndarray:
        y = np.maximum(x * inv_slope + xi, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(np.isposinf(y), 1.0, y / (y + 1.0))
            return np.where(
                np.isposinf(y), 0.0,
                z.pgf_prime(s) / (p * (y + 1.0) ** 2) * inv_slope)

    atoms = ",".join(f"{int(v)}@{pr:g}" for v, pr in z.atoms)
    psi = PsiFunction(
        name=f"lf(p={p:g},z={atoms})",
        fn=fn,
        deriv_fn=deriv_fn,
        array_fn=array_fn,
        array_deriv_fn=array_deriv_fn,
        psi_inf=inv_p,
        domain_min=-slope * xi,
        bounded=True,
    )
    return psi, ModelConstants(p=p, root=xi, slope=slope)


def make_clf_psi(p: float, z: ZSpecContinuous) -> tuple[PsiFunction, ModelConstants]:
    """Driver of the continuous linear-fractional solvable model.

    gamma(th) = E[exp(-Z/th)] / p increases from 0 to 1/p; tau solves
    gamma(tau) = 1 and gamma'(th) = E[(Z/th^2) exp(-Z/th)] / p.
    """
    if not (0.0 < p < 1.0):
        raise ConfigError(f"p={p!r} not in (0, 1)")
    if not isinstance(z, ZSpecContinuous):
        raise ConfigError("clf driver needs a ZSpecContinuous")
    inv_p = 1.0 / p
    pairs = z.atoms
    _exp = math.exp

    if len(pairs) == 1:
        v0, p0 = pairs[0]

        def _mean_exp(th: float) -> float:
            return p0 * _exp(-v0 / th)

        def _mean_exp_prime(th: float) -> float:
            return p0 * (v0 / (th * th)) * _exp(-v0 / th)
    else:
        def _mean_exp(th: float) -> float:
            acc = 0.0
            for v, pr in pairs:
                acc += pr * _exp(-v / th)
            return acc

        def _mean_exp_prime(th: float) -> float:
            acc = 0.0
            for v, pr in pairs:
                acc += pr * (v / (th * th)) * _exp(-v / th)
            return acc

    def gamma(th: float) -> float:
        if th <= 0.0:
            return 0.0
        if th == math.inf:
            return inv_p
        return _mean_exp(th) * inv_p

    def gamma_prime(th: float) -> float:
        if th <= 0.0 or th == math.inf:
            return 0.0
        return _mean_exp_prime(th) * inv_p

    tau = _bisect_root(lambda t: gamma(t) - 1.0)
    slope = gamma_prime(tau)
    if not slope > 0.0:
        raise NumericError("derivative at the normalizing root is not positive")
    inv_slope = 1.0 / slope

    def fn(x: float) -> float:
        return gamma(x * inv_slope + tau)

    def deriv_fn(x: float) -> float:
        return gamma_prime(x * inv_slope + tau) * inv_slope

    def array_fn(x: np.ndarray) -> np.ndarray:
        th = np.maximum(x * inv_slope + tau, 0.0)
        with np.errstate(divide="ignore"):
            inv_th = np.where(th > 0.0, 1.0 / th, math.inf)
        return sum(pr * np.exp(-v * inv_th) for v, pr in pairs) * inv_p

    def array_deriv_fn(x: np.ndarray) -> np.ndarray:
        th = np.maximum(x * inv_slope + tau, 0.0)
        with np.errstate(divide="ignore"):
            inv_th = np.where(th > 0.0, 1.0 / th, math.inf)
        out = sum(pr * v * inv_th ** 2 * np.exp(-v * inv_th) for v, pr in pairs)
        return np.where(np.isposinf(inv_th), 0.0, out) * inv_p * inv_slope

    atoms = ",".join(f"{v:g}@{pr:g}" for v, pr in pairs)
    psi = PsiFunction(
        name=f"clf(p={p:g},z={atoms})",
        fn=fn,
        deriv_fn=deriv_fn,
        array_fn=array_fn,
        array_deriv_fn=array_deriv_fn,
        psi_inf=inv_p,
        domain_min=-tau * slope,
        bounded=True,
    )
    return psi, ModelConstants(p=p, root=tau, slope=slope)


def make_custom_psi(name: str, fn: Callable[[float], float],
                    deriv_fn: Callable[[float], float] | None = None,
                    *, psi_inf: float = math.inf,
                    domain_min: float = -math.inf,
                    domain_max: float = math.inf,
                    bounded: bool = False) -> PsiFunction:
    """Wrap a user-supplied scalar function as a driver.

    Without an analytic derivative a central difference with step 1e-6 is
    used.  The array paths fall back to elementwise evaluation.
    """
    if deriv_fn is None:
        deriv_fn = lambda x: central_difference(fn, x)  # noqa: E731
    array_fn = np.vectorize(fn, otypes=[float])
    array_deriv_fn = np.vectorize(deriv_fn, otypes=[float])
    return PsiFunction(name=name, fn=fn, deriv_fn=deriv_fn,
                       array_fn=array_fn, array_deriv_fn=array_deriv_fn,
                       psi_inf=psi_inf, domain_min=domain_min,
                       domain_max=domain_max, bounded=bounded)


def dual_psi(psi: PsiFunction) -> PsiFunction:
    """Time-reversal dual x -> 1/psi(-x).

    The derivative is psi'(-x) / psi(-x)^2, so the dual again satisfies the
    normalization at 0, and the construction is an involution pointwise.
    The dual's domain is the reflection of the original's; since the value
    at the reflected lower boundary may vanish (giving an infinite dual),
    the dual is published as unbounded.
    """
    base = psi

    def fn(x: float) -> float:
        val = base(-x)
        if val == 0.0:
            return math.inf
        return 1.0 / val

    def deriv_fn(x: float) -> float:
        val = base(-x)
        if val == 0.0:
            return math.inf
        return base.deriv(-x) / (val * val)

    def array_fn(x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 1.0 / base(-x)

    def array_deriv_fn(x: np.ndarray) -> np.ndarray:
        val = base(-x)
        with np.errstate(divide="ignore"):
            return base.deriv(-x) / (val * val)

    return PsiFunction(
        name=f"dual({base.name})",
        fn=fn,
        deriv_fn=deriv_fn,
        array_fn=array_fn,
        array_deriv_fn=array_deriv_fn,
        psi_inf=math.inf,
        domain_min=-base.domain_max,
        domain_max=-base.domain_min,
        bounded=False,
    )


# ---------------------------------------------------------------------------
# driver specifications (config files / CLI)
# ---------------------------------------------------------------------------

_KINDS = ("affine", "fig1", "fig1-clamped", "lf", "clf")


def parse_driver_string(text: str) -> dict:
    """Parse an inline driver spec.

    Grammar: ``kind[:key=value,...]`` with keys ``p`` and ``z``; atoms are
    ``value@prob`` joined by ``+``, and a bare ``z=V`` means Z == V.
    Examples: ``fig1``, ``lf:p=0.5,z=1``, ``clf:p=0.4,z=0.5@0.3+2@0.7``.
    """
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    spec: dict = {"kind": kind}
    if rest:
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"malformed driver option {item!r}")
            key = key.strip()
            if key == "p":
                spec["p"] = float(value)
            elif key == "z":
                atoms = []
                for piece in value.split("+"):
                    v, sep2, pr = piece.partition("@")
                    atoms.append((float(v), float(pr) if sep2 else 1.0))
                spec["z_atoms"] = atoms
            else:
                raise ConfigError(f"unknown driver option {key!r}")
    return spec


def driver_from_spec(spec: str | dict):
    """Build a driver from a config mapping or inline string.

    Returns ``(psi, constants)`` where ``constants`` is None for drivers
    that are not model-derived.
    """
    if isinstance(spec, str):
        spec = parse_driver_string(spec)
    unknown = set(spec) - {"kind", "p", "z_atoms"}
    if unknown:
        raise ConfigError(f"unknown driver spec keys {sorted(unknown)!r}")
    kind = spec.get("kind")
    if kind not in _KINDS:
        raise ConfigError(f"unknown driver kind {kind!r}; expected one of {_KINDS}")
    if kind == "affine":
        return make_affine_psi(), None
    if kind == "fig1":
        return make_fig1_psi(), None
    if kind == "fig1-clamped":
        return make_fig1_clamped_psi(), None
    if "p" not in spec or "z_atoms" not in spec:
        raise ConfigError(f"driver kind {kind!r} requires p and z atoms")
    if kind == "lf":
        return make_lf_psi(float(spec["p"]), ZSpecDiscrete(tuple(map(tuple, spec["z_atoms"]))))
    return make_clf_psi(float(spec["p"]), ZSpecContinuous(tuple(map(tuple, spec["z_atoms"]))))
