"""The two exactly solvable model families.

Linear-fractional laws LF(alpha, beta) on the nonnegative integers
(mass 1 - 1/(alpha+beta) at zero, geometric tail with ratio
beta/(alpha+beta), mean 1/alpha) and their continuous analogue
CLF(lambda, rho) (mass 1 - rho at zero, exponential tail rho e^{-lambda x},
mean rho/lambda).  Both families are closed under the two elementary
operations of the recursion:

  * summing a geometric(p) number of i.i.d. copies,
  * subtracting an independent Z and taking the positive part,

so one step of the distributional recursion is a closed-form map on the
two parameters.  Reparametrized through the model constants (xi, or tau)
these parameter orbits are exactly orbits of the two-parameter recursion
under the model's driver; that commuting square is the main cross-module
consistency oracle of the test suite.

``lf_step`` is deliberately the composition of the two elementary facts;
the equivalent single-formula update is kept in the tests as an
independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .curve import CriticalCurve, h_eval
from .drivers import (ModelConstants, PsiFunction, ZSpecContinuous,
                      ZSpecDiscrete, make_clf_psi, make_lf_psi)
from .recursion import FreeEnergyEstimate, PhaseLabel, classify, free_energy

__all__ = [
    "LFParams",
    "CLFParams",
    "LFModel",
    "CLFModel",
    "make_lf_model",
    "make_clf_model",
    "lf_geometric_sum",
    "lf_subtract",
    "lf_step",
    "lf_to_uv",
    "clf_geometric_sum",
    "clf_subtract",
    "clf_step",
    "clf_to_uv",
    "lf_pmf",
    "lf_tail",
    "clf_tail",
    "free_energy_lf",
    "free_energy_clf",
    "ThresholdReport",
    "gamma_star",
    "rho_star",
    "TailReport",
    "critical_tail_lf",
]


@dataclass(frozen=True)
class LFParams:
    """Parameters of a linear-fractional law; alpha + beta >= 1 is the
    admissibility constraint and every step map preserves it."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise ValueError(f"LF parameters must be positive, got {self}")
        if self.alpha + self.beta < 1.0 - 1e-12:
            raise ValueError(f"LF needs alpha + beta >= 1, got {self}")


@dataclass(frozen=True)
class CLFParams:
    """Parameters of a continuous linear-fractional law (rate, mass of the
    exponential part)."""

    lam: float
    rho: float

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError(f"CLF rate must be positive, got {self}")
        if not (-1e-12 <= self.rho <= 1.0 + 1e-12):
            raise ValueError(f"CLF rho must lie in [0, 1], got {self}")


@dataclass(frozen=True)
class LFModel:
    p: float
    zspec: ZSpecDiscrete
    constants: ModelConstants
    psi: PsiFunction

    @property
    def xi(self) -> float:
        return self.constants.root


@dataclass(frozen=True)
class CLFModel:
    p: float
    zspec: ZSpecContinuous
    constants: ModelConstants
    psi: PsiFunction

    @property
    def tau(self) -> float:
        return self.constants.root


def make_lf_model(p: float, zspec: ZSpecDiscrete) -> LFModel:
    psi, constants = make_lf_psi(p, zspec)
    return LFModel(p=p, zspec=zspec, constants=constants, psi=psi)


def make_clf_model(p: float, zspec: ZSpecContinuous) -> CLFModel:
    psi, constants = make_clf_psi(p, zspec)
    return CLFModel(p=p, zspec=zspec, constants=constants, psi=psi)


# ---------------------------------------------------------------------------
# one-step closed-form maps
# ---------------------------------------------------------------------------

def lf_geometric_sum(params: LFParams, p: float) -> LFParams:
    """Law of a geometric(p) sum of i.i.d. LF(alpha, beta) variables."""
    return LFParams(p * params.alpha, 1.0 - p + p * params.beta)


def lf_subtract(params: LFParams, z: ZSpecDiscrete) -> LFParams:
    """Law of (Y - Z)_+: both parameters divided by pgf_Z(beta/(alpha+beta))."""
    lam = params.beta / (params.alpha + params.beta)
    d = z.pgf(lam)
    return LFParams(params.alpha / d, params.beta / d)


def lf_step(params: LFParams, model: LFModel) -> LFParams:
    """One step of the distributional recursion: geometric sum, then
    subtraction of Z with positive part."""
    return lf_subtract(lf_geometric_sum(params, model.p), model.zspec)


def lf_to_uv(params: LFParams, model: LFModel) -> tuple[float, float]:
    """Coordinates of the LF parameter pair on the two-parameter recursion:
    u = slope (1-p) / (p alpha), v = slope (beta/alpha - xi)."""
    c = model.constants
    u = c.slope * (1.0 - model.p) / (model.p * params.alpha)
    v = c.slope * (params.beta / params.alpha - c.root)
    return u, v


def clf_geometric_sum(params: CLFParams, p: float) -> CLFParams:
    d = p + (1.0 - p) * params.rho
    return CLFParams(params.lam * p / d, params.rho / d)


def clf_subtract(params: CLFParams, z: ZSpecContinuous) -> CLFParams:
    """Law of (X - Z)_+: the rate survives, the mass picks up the Laplace
    transform of Z at that rate."""
    return CLFParams(params.lam, params.rho * z.laplace(params.lam))


def clf_step(params: CLFParams, model: CLFModel) -> CLFParams:
    return clf_subtract(clf_geometric_sum(params, model.p), model.zspec)


def clf_to_uv(params: CLFParams, model: CLFModel) -> tuple[float, float]:
    """u = slope ((1-p)/p) (rho/lambda), v = slope (1/lambda - tau);
    the commuting square with the recursion requires v > -tau slope."""
    c = model.constants
    u = c.slope * (1.0 - model.p) / model.p * (params.rho / params.lam)
    v = c.slope * (1.0 / params.lam - c.root)
    return u, v


# ---------------------------------------------------------------------------
# distribution helpers (shared with the Monte Carlo validation)
# ---------------------------------------------------------------------------

def lf_pmf(params: LFParams, k: int) -> float:
    """P(Y = k) for an LF law."""
    a, b = params.alpha, params.beta
    s = a + b
    if k == 0:
        return 1.0 - 1.0 / s
    return a / s ** 2 * (b / s) ** (k - 1)


def lf_tail(params: LFParams, k: int) -> float:
    """P(Y >= k) for k >= 1: geometric with ratio beta/(alpha+beta)."""
    s = params.alpha + params.beta
    return (params.beta / s) ** (k - 1) / s


def clf_tail(params: CLFParams, x: float) -> float:
    """P(X > x) for x > 0."""
    return params.rho * math.exp(-params.lam * x)


# ---------------------------------------------------------------------------
# free energies
# ---------------------------------------------------------------------------

def free_energy_lf(model: LFModel, params: LFParams,
                   **fe_kwargs) -> FreeEnergyEstimate:
    """Free energy lim p^n / alpha_n, computed on the recursion side and
    rescaled by p / ((1-p) slope)."""
    u0, v0 = lf_to_uv(params, model)
    fe = free_energy(u0, v0, model.psi, **fe_kwargs)
    scale = model.p / ((1.0 - model.p) * model.constants.slope)
    return _rescale(fe, scale)


def free_energy_clf(model: CLFModel, params: CLFParams,
                    **fe_kwargs) -> FreeEnergyEstimate:
    """Free energy lim p^n rho_n / lambda_n of the continuous model."""
    u0, v0 = clf_to_uv(params, model)
    fe = free_energy(u0, v0, model.psi, **fe_kwargs)
    scale = model.p / ((1.0 - model.p) * model.constants.slope)
    return _rescale(fe, scale)


def _rescale(fe: FreeEnergyEstimate, scale: float) -> FreeEnergyEstimate:
    log_scale = math.log(scale)

    def lin(x: float) -> float:
        return x * scale

    def lg(x: float) -> float:
        return x + log_scale if math.isfinite(x) else x

    return FreeEnergyEstimate(
        value=lin(fe.value), log_value=lg(fe.log_value),
        lower=lin(fe.lower), upper=lin(fe.upper),
        log_lower=lg(fe.log_lower), log_upper=lg(fe.log_upper),
        n_star=fe.n_star, converged=fe.converged)


# ---------------------------------------------------------------------------
# critical thresholds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThresholdReport:
    """Critical scaling threshold along a one-parameter family.

    ``value`` is None exactly when the admissibility condition fails, in
    which case the free energy vanishes on the whole family; that regime
    is a legitimate outcome, not an error.
    """

    value: float | None
    hyp_ok: bool
    v_seed: float
    h_at_seed: float
    message: str
    straddle_upper: PhaseLabel | None = None
    straddle_lower: PhaseLabel | None = None

    @property
    def straddle_ok(self) -> bool:
        return (self.straddle_upper is PhaseLabel.SUPERCRITICAL
                and self.straddle_lower is PhaseLabel.SUBCRITICAL)


def gamma_star(model: LFModel, alpha: float, beta: float,
               curve: CriticalCurve, *, check_straddle: bool = True,
               straddle_factor: float = 1.1,
               classify_max_iter: int = 10 ** 6) -> ThresholdReport:
    """Critical scale gamma* of the family LF(alpha/gamma, beta/gamma).

    gamma* = p alpha h(v_seed) / (slope (1-p)) with
    v_seed = slope (beta/alpha - xi), valid when beta/alpha <= xi and the
    admissibility bound h(v_seed) < slope (1-p)(alpha+beta)/(p alpha)
    holds; otherwise the family's free energy is identically zero.
    Optionally verifies by classification that gamma* +- 10% straddles the
    phase boundary.
    """
    c = model.constants
    p = model.p
    if alpha + beta < 1.0 - 1e-12:
        raise ValueError("need alpha + beta >= 1")
    if beta / alpha > c.root * (1.0 + 1e-12):
        raise ValueError("need beta/alpha <= xi (v_seed <= 0)")
    v_seed = c.slope * (beta / alpha - c.root)
    h_seed = h_eval(curve, v_seed)
    bound = c.slope * (1.0 - p) * (alpha + beta) / (p * alpha)
    if not h_seed < bound:
        return ThresholdReport(
            value=None, hyp_ok=False, v_seed=v_seed, h_at_seed=h_seed,
            message="admissibility bound fails: free energy identically 0 "
                    "on the family")
    gam = p * alpha * h_seed / (c.slope * (1.0 - p))
    up = low = None
    if check_straddle and gam > 0.0:
        u_seed = c.slope * (1.0 - p) / (p * alpha)
        up = classify(u_seed * straddle_factor * gam, v_seed, model.psi,
                      max_iter=classify_max_iter)
        low = classify(u_seed * gam / straddle_factor, v_seed, model.psi,
                       max_iter=classify_max_iter)
    return ThresholdReport(value=gam, hyp_ok=True, v_seed=v_seed,
                           h_at_seed=h_seed, message="ok",
                           straddle_upper=up, straddle_lower=low)


def rho_star(model: CLFModel, lam: float, curve: CriticalCurve, *,
             check_straddle: bool = True, straddle_factor: float = 1.1,
             classify_max_iter: int = 10 ** 6) -> ThresholdReport:
    """Critical mass rho* of the family CLF(lambda, rho) at fixed rate
    lambda >= 1/tau:  rho* = lambda p h(v_seed) / (slope (1-p)) with
    v_seed = slope (1/lambda - tau)."""
    c = model.constants
    p = model.p
    if lam < 1.0 / c.root * (1.0 - 1e-12):
        raise ValueError("need lambda >= 1/tau (v_seed <= 0)")
    v_seed = c.slope * (1.0 / lam - c.root)
    h_seed = h_eval(curve, v_seed)
    if not lam * p * h_seed < c.slope * (1.0 - p):
        return ThresholdReport(
            value=None, hyp_ok=False, v_seed=v_seed, h_at_seed=h_seed,
            message="admissibility bound fails: free energy identically 0 "
                    "on the family")
    rho = lam * p * h_seed / (c.slope * (1.0 - p))
    up = low = None
    if check_straddle and rho > 0.0:
        u_unit = c.slope * (1.0 - p) / p / lam  # u at rho = 1
        up = classify(u_unit * straddle_factor * rho, v_seed, model.psi,
                      max_iter=classify_max_iter)
        low = classify(u_unit * rho / straddle_factor, v_seed, model.psi,
                       max_iter=classify_max_iter)
    return ThresholdReport(value=rho, hyp_ok=True, v_seed=v_seed,
                           h_at_seed=h_seed, message="ok",
                           straddle_upper=up, straddle_lower=low)


# ---------------------------------------------------------------------------
# critical tail iteration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailReport:
    """Deterministic parameter iteration started on the critical point.

    rows hold (n, n^2 P(X_n >= 1), conditioned geometric parameter
    beta_n/(alpha_n+beta_n), ratio beta_n/alpha_n); the first statistic
    tends to 2p / ((1-p) slope (1+xi)) and the second to xi/(1+xi).
    """

    rows: list[tuple[int, float, float, float]]
    target_tail: float
    target_ratio: float
    gamma_star_used: float


def critical_tail_lf(model: LFModel, curve: CriticalCurve,
                     alpha: float = 1.0, beta: float = 0.5,
                     n_max: int = 10 ** 4, *,
                     record_at: tuple[int, ...] | None = None,
                     gamma_override: float | None = None) -> TailReport:
    """Iterate the closed-form step from LF(alpha/gamma*, beta/gamma*).

    Accuracy of the critical start is the curve's accuracy; pass
    ``gamma_override`` (e.g. from a classifier-refined h) when the orbit
    must track the critical curve for many thousands of steps.
    """
    c = model.constants
    if gamma_override is not None:
        gam = gamma_override
    else:
        rep = gamma_star(model, alpha, beta, curve, check_straddle=False)
        if rep.value is None:
            raise ValueError(rep.message)
        gam = rep.value
    a = alpha / gam
    b = beta / gam
    if record_at is None:
        ns = sorted({int(round(10 ** (k / 8.0))) for k in range(0, 8 * 5)}
                    | {n_max})
        record_at = tuple(n for n in ns if 1 <= n <= n_max)
    marks = set(record_at)
    rows = []
    params = LFParams(a, b)
    for n in range(1, n_max + 1):
        params = lf_step(params, model)
        if n in marks:
            s = params.alpha + params.beta
            rows.append((n, n * n / s, params.beta / s,
                         params.beta / params.alpha))
    target_tail = 2.0 * model.p / ((1.0 - model.p) * c.slope * (1.0 + c.root))
    target_ratio = c.root / (1.0 + c.root)
    return TailReport(rows=rows, target_tail=target_tail,
                      target_ratio=target_ratio, gamma_star_used=gam)
