"""Large-deviation rate functions for cluster counts.

Every rate here is a Legendre transform ``I(x) = sup_l {l x - Lambda(l)}`` of a
limiting scaled cumulant function.  ``Lambda`` is represented by
``LambdaFn``; ``legendre`` maximizes the concave objective by bracket
doubling followed by golden-section search.

The frequency-r cumulant ``Lambda_{alpha,r}`` is defined through the root of

    f(e) = (r-a) log(1-(r-a)e) - r log(1-re) - a log(a e) - log(p_a(r)(e^l - 1))

on 0 < e < 1/r.  ``f`` is convex in ``e`` with a closed-form minimizer and
tends to +inf at both ends, so there are zero or two roots.  The root on the
right of the minimizer is used; it makes ``Lambda_{alpha,r}`` increasing and
unbounded.  Below a threshold ``lambda_min`` there is no root and the
function is undefined; Legendre suprema skip that gap.

Root finding works in ``t = -log(1 - r e)``, which keeps full precision as
``e`` approaches ``1/r``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .epm_core import p_alpha_r
from .errors import InvalidParams, NumericalFailure, Overflow

LAMBDA_CAP = 700.0
GOLDEN_TOL = 1e-10
SLOPE_TOL = 1e-9
INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
INF = math.inf


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise InvalidParams(f"alpha must lie in (0, 1), got {alpha}")


def lambda_ewens(lam: float, theta: float) -> float:
    """theta (e^lam - 1)."""
    if lam > LAMBDA_CAP:
        raise Overflow(f"lambda={lam} exceeds cap {LAMBDA_CAP}")
    return theta * math.expm1(lam)


def lambda_alpha(lam: float, alpha: float) -> float:
    """-log(1 - (1 - e^{-lam})^{1/alpha}) for lam > 0, else 0."""
    _check_alpha(alpha)
    if lam <= 0.0:
        return 0.0
    # s = log(1 - e^{-lam}) / alpha, accurate at both ends of lam
    if lam < math.log(2.0):
        s = math.log(-math.expm1(-lam)) / alpha
    else:
        s = math.log1p(-math.exp(-lam)) / alpha
    if s < -1.0:
        return -math.log1p(-math.exp(s))
    return -math.log(-math.expm1(s))


@dataclass(frozen=True)
class RootDiagnostics:
    """Outcome of the frequency-r root equation at one lambda.

    ``t0 = -log(1 - r epsilon0)`` is carried alongside ``epsilon0`` since the
    latter rounds to ``1/r`` for large lambda.
    """

    lam: float
    alpha: float
    r: int
    exists: bool
    branch: str
    epsilon0: float = math.nan
    t0: float = math.nan
    residual: float = math.nan
    bracket: tuple[float, float] = (math.nan, math.nan)
    epsilon_star: float = math.nan
    left_root: float = math.nan


def epsilon_star(alpha: float, r: int) -> float:
    """Minimizer of the epsilon terms of the root equation on (0, 1/r)."""
    a = r - alpha
    return (a + r - math.hypot(a, r)) / (2.0 * a * r)


def root_lhs(eps: float, lam: float, alpha: float, r: int) -> float:
    """Left side f(eps) of the root equation, evaluated as written."""
    a = r - alpha
    return (a * math.log(1.0 - a * eps) - r * math.log(1.0 - r * eps)
            - alpha * math.log(alpha * eps) - math.log(p_alpha_r(alpha, r) * math.expm1(lam)))


def _eps_terms_t(t: float, alpha: float, r: int) -> float:
    # epsilon terms of f rewritten in t = -log(1 - r eps)
    a = r - alpha
    return (a * math.log((alpha + a * math.exp(-t)) / r) + r * t
            - alpha * math.log(alpha * -math.expm1(-t) / r))


def _lam_term(lam: float, alpha: float, r: int) -> float:
    # log(p_alpha(r) (e^lam - 1)) without overflow
    return math.log(p_alpha_r(alpha, r)) + lam + math.log(-math.expm1(-lam))


def _t_of_eps(eps: float, r: int) -> float:
    return -math.log1p(-r * eps)


def _eps_of_t(t: float, r: int) -> float:
    return -math.expm1(-t) / r


def lambda_min_alpha_r(alpha: float, r: int) -> float:
    """Smallest lambda > 0 at which the root equation has a solution."""
    _check_alpha(alpha)
    tstar = _t_of_eps(epsilon_star(alpha, r), r)
    gap = _eps_terms_t(tstar, alpha, r) - math.log(p_alpha_r(alpha, r))
    # e^lam - 1 = e^gap
    return gap + math.log1p(math.exp(-gap)) if gap > 0 else math.log1p(math.exp(gap))


def _bisect(F, lo: float, hi: float, flo: float, tol: float = 1e-15, maxit: int = 400):
    """Bisection for a sign change with F(lo) of sign ``flo``; returns (root, F(root))."""
    for _ in range(maxit):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        fm = F(mid)
        if fm == 0.0:
            return mid, fm
        if (fm < 0) == (flo < 0):
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(lo)):
            break
    else:
        raise NumericalFailure("bisection did not converge")
    fl, fh = F(lo), F(hi)
    return (lo, fl) if abs(fl) <= abs(fh) else (hi, fh)


def epsilon0_solve(lam: float, alpha: float, r: int, *, want_left: bool = False) -> RootDiagnostics:
    """Right-branch root epsilon0(lam) of the frequency-r equation."""
    _check_alpha(alpha)
    if r < 1:
        raise InvalidParams(f"r must be >= 1, got {r}")
    es = epsilon_star(alpha, r)
    if not lam > 0:
        return RootDiagnostics(lam, alpha, r, False, "none", epsilon_star=es)
    C = _lam_term(lam, alpha, r)
    F = lambda t: _eps_terms_t(t, alpha, r) - C  # noqa: E731
    tstar = _t_of_eps(es, r)
    fstar = F(tstar)
    if fstar > 1e-13 * max(1.0, abs(C)):
        return RootDiagnostics(lam, alpha, r, False, "none", residual=fstar, epsilon_star=es)
    if fstar >= 0.0:
        # double root at the minimum (lam = lambda_min)
        return RootDiagnostics(lam, alpha, r, True, "right", es, tstar, 0.0, (es, es), es, es)
    hi = max(2.0 * tstar, 1.0)
    while F(hi) <= 0:
        hi *= 2.0
        if hi > 1e6:
            raise NumericalFailure("could not bracket the root")
    t0, res = _bisect(F, tstar, hi, fstar)
    left = math.nan
    if want_left:
        lo = 0.5 * tstar
        while F(lo) <= 0:
            lo *= 0.5
            if lo < 1e-300:
                raise NumericalFailure("could not bracket the left root")
        tl, _ = _bisect(F, lo, tstar, F(lo))
        left = _eps_of_t(tl, r)
    return RootDiagnostics(lam, alpha, r, True, "right", _eps_of_t(t0, r), t0, res,
                           (es, _eps_of_t(hi, r)), es, left)


def lambda_alpha_r(lam: float, alpha: float, r: int) -> float:
    """log(1 + alpha e0 / (1 - r e0)) for lam > 0; 0 for lam <= 0; nan where undefined."""
    if lam <= 0.0:
        return 0.0
    diag = epsilon0_solve(lam, alpha, r)
    if not diag.exists:
        return math.nan
    # alpha e0 / (1 - r e0) = alpha (e^t0 - 1) / r
    return math.log1p(alpha * math.expm1(diag.t0) / r)


@dataclass(frozen=True)
class LambdaFn:
    """A limiting cumulant function with its domain.

    ``zero_nonpos`` marks functions that vanish for lam <= 0.  On lam > 0 the
    function is defined from ``lam_min`` onward (``lam_min = 0`` means
    everywhere).
    """

    tag: str
    params: tuple
    fn: Callable[[float], float] = field(compare=False)
    zero_nonpos: bool = True
    lam_min: float = 0.0

    def __call__(self, lam: float) -> float:
        if lam <= 0.0 and self.zero_nonpos:
            return 0.0
        if 0.0 < lam < self.lam_min:
            return math.nan
        return self.fn(lam)

    def defined(self, lam: float) -> bool:
        return lam <= 0.0 or lam >= self.lam_min


def ewens_fn(theta: float) -> LambdaFn:
    return LambdaFn("ewens", (theta,), lambda l: lambda_ewens(l, theta), zero_nonpos=False)


def alpha_fn(alpha: float) -> LambdaFn:
    _check_alpha(alpha)
    return LambdaFn("alpha", (alpha,), lambda l: lambda_alpha(l, alpha))


def alpha_r_fn(alpha: float, r: int) -> LambdaFn:
    lmin = lambda_min_alpha_r(alpha, r)
    return LambdaFn("alpha_r", (alpha, r), lambda l: lambda_alpha_r(l, alpha, r), lam_min=lmin)


def composed_fn(outer: Callable[[float], float], inner: LambdaFn, tag: str, params: tuple) -> LambdaFn:
    """outer(inner(lam)); inherits the domain of ``inner``.  Requires outer(0) = 0."""
    return LambdaFn(f"composed:{tag}", params, lambda l: outer(inner(l)),
                    zero_nonpos=inner.zero_nonpos, lam_min=inner.lam_min)


@dataclass(frozen=True)
class LegendreResult:
    x: float
    value: float
    argmax: float
    converged: bool
    reason: str = ""
    warning: str = ""


def _golden(g, a: float, b: float, tol: float):
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol:
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - INVPHI * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + INVPHI * (b - a)
            gd = g(d)
    m = 0.5 * (a + b)
    return m, g(m)


def _expand(g, start: float, stop: float):
    """Walk from ``start`` toward ``stop`` with doubling steps while g rises.

    Returns (bracket_lo, bracket_hi, hit_stop).  The bracket contains the
    maximum of a concave ``g`` on the segment.
    """
    sign = 1.0 if stop > start else -1.0
    prev2, prev, gprev = start, start, g(start)
    step = 1.0
    while True:
        nxt = start + sign * step
        if sign * (nxt - stop) >= 0:
            nxt = stop
        gn = g(nxt)
        if gn < gprev:
            return min(prev2, nxt), max(prev2, nxt), False
        if nxt == stop:
            return min(prev, nxt), max(prev, nxt), True
        prev2, prev, gprev = prev, nxt, gn
        step *= 2.0


def _maximize(g, lo: float, hi: float, start: float, tol: float):
    """Maximum of g on [lo, hi]; (argmax, value, unbounded_flag).

    Exact for concave g.  The segment ends are also compared, which covers
    objectives that are convex with the maximum at an end.
    """
    lam, val, unb = _maximize_concave(g, lo, hi, start, tol)
    if unb:
        return lam, val, unb
    for edge, inner in ((hi, hi - 1.0), (lo, lo + 1.0)):
        if edge == start or not lo <= inner <= hi:
            continue
        ge = g(edge)
        if abs(ge - g(inner)) > SLOPE_TOL and ge > g(inner):
            return edge, INF, True
        if ge > val:
            lam, val = edge, ge
    return lam, val, False


def _maximize_concave(g, lo: float, hi: float, start: float, tol: float):
    gs = g(start)
    if start < hi and g(min(start + 1e-6, hi)) > gs:
        a, b, at_edge = _expand(g, start, hi)
        edge = hi
    elif start > lo and g(max(start - 1e-6, lo)) > gs:
        a, b, at_edge = _expand(g, start, lo)
        edge = lo
    else:
        return start, gs, False
    if at_edge:
        inner = edge - 1.0 if edge == hi else edge + 1.0
        slope = abs(g(edge) - g(inner))
        if slope > SLOPE_TOL:
            return edge, INF, True
        return edge, g(edge), False
    lam, val = _golden(g, a, b, tol)
    return lam, val, False


def legendre(fn: LambdaFn, x: float, *, cap: float = LAMBDA_CAP, tol: float = GOLDEN_TOL) -> LegendreResult:
    """sup_lam {lam x - fn(lam)} over lam in [-cap, cap] where fn is defined."""
    if not math.isfinite(x):
        raise InvalidParams("x must be finite")
    g = lambda l: l * x - fn(l)  # noqa: E731
    if fn.zero_nonpos:
        if x < 0:
            return LegendreResult(x, INF, -INF, True, "x < 0 with Lambda = 0 on lam <= 0")
        start = max(fn.lam_min, 0.0)
        lam, val, unb = _maximize(g, start, cap, start, tol)
        warn = ""
        if fn.lam_min > 0:
            warn = f"Lambda undefined on (0, {fn.lam_min:.6g}); gap excluded"
            if not unb and val < 0.0:
                lam, val = 0.0, 0.0
        if unb:
            return LegendreResult(x, INF, cap, True, "supremum unbounded as lam -> +inf", warn)
        return LegendreResult(x, max(val, 0.0), lam, True, "", warn)
    lam, val, unb = _maximize(g, -cap, cap, 0.0, tol)
    if unb:
        return LegendreResult(x, INF, lam, True, "supremum unbounded at the lambda cap")
    reason = "maximum at lambda cap" if abs(lam) == cap else ""
    return LegendreResult(x, max(val, 0.0), lam, True, reason)


def rate_I_theta(x: float, theta: float) -> float:
    """x log(x/theta) - x + theta for x >= 0; +inf for x < 0."""
    if x < 0:
        return INF
    if x == 0:
        return float(theta)
    return x * math.log(x / theta) - x + theta


def rate_I1(x: float, theta0: float) -> float:
    return rate_I_theta(x, theta0)


def rate_I2(x: float, beta: float, theta0: float) -> float:
    return beta * rate_I1(x / beta, theta0)


def rate_I_alpha(x: float, alpha: float) -> LegendreResult:
    """Rate of K_n / n for EPM(alpha, theta), alpha in (0, 1)."""
    return legendre(alpha_fn(alpha), x)


def rate_I_alpha_r(x: float, alpha: float, r: int) -> LegendreResult:
    """Rate of M_{r,n} / n for EPM(alpha, theta)."""
    return legendre(alpha_r_fn(alpha, r), x)


def _hpydp_fn(inner: LambdaFn, theta: float, d: int) -> LambdaFn:
    return composed_fn(lambda v: theta * d * math.expm1(v), inner, "theta_d_exp", (theta, d))


def _hpyp_fn(inner: LambdaFn, beta: float, weights: Sequence[float]) -> LambdaFn:
    sw = math.fsum(weights)
    if any(w <= 0 for w in weights):
        raise InvalidParams("weights must be positive")
    return composed_fn(lambda v: lambda_alpha(v, beta) * sw, inner, "beta_sum_w", (beta, sw))


def rate_I3(x: float, alpha: float, theta: float, d: int) -> LegendreResult:
    return legendre(_hpydp_fn(alpha_fn(alpha), theta, d), x)


def rate_I4(x: float, alpha: float, beta: float, theta: float, weights: Sequence[float]) -> LegendreResult:
    """``theta`` does not enter the limit; it is accepted for a uniform signature."""
    return legendre(_hpyp_fn(alpha_fn(alpha), beta, weights), x)


def rate_Mr_hpydp(x: float, alpha: float, r: int, theta: float, d: int) -> LegendreResult:
    return legendre(_hpydp_fn(alpha_r_fn(alpha, r), theta, d), x)


def rate_Mr_hpyp(x: float, alpha: float, beta: float, r: int, theta: float,
                 weights: Sequence[float]) -> LegendreResult:
    return legendre(_hpyp_fn(alpha_r_fn(alpha, r), beta, weights), x)


def rate_xi_dp(x: float, theta: float, d: int) -> float:
    """Rate of xi(N) / log N when groups are Ewens(theta)."""
    return rate_I_theta(x, theta * d)


def rate_xi_py(x: float, beta: float, theta: float, weights: Sequence[float]) -> LegendreResult:
    """Rate of xi(N) / N when groups are EPM(beta, theta)."""
    sw = math.fsum(weights)
    fn = LambdaFn("beta_sum_w", (beta, sw), lambda l: lambda_alpha(l, beta) * sw)
    return legendre(fn, x)


RATE_FUNCTIONS = {
    "I_theta": ("theta",),
    "I_alpha": ("alpha",),
    "I_alpha_r": ("alpha", "r"),
    "I1": ("theta0",),
    "I2": ("beta", "theta0"),
    "I3": ("alpha", "theta", "d"),
    "I4": ("alpha", "beta", "theta", "weights"),
    "Mr_hpydp": ("alpha", "r", "theta", "d"),
    "Mr_hpyp": ("alpha", "beta", "r", "theta", "weights"),
    "xi_dp": ("theta", "d"),
    "xi_py": ("beta", "theta", "weights"),
}


def evaluate_rate(name: str, x: float, **params) -> LegendreResult:
    """Evaluate a named rate function; closed forms report ``argmax = nan``."""
    if name not in RATE_FUNCTIONS:
        raise InvalidParams(f"unknown rate function {name!r}")
    args = [params[k] for k in RATE_FUNCTIONS[name]]
    fn = {
        "I_theta": rate_I_theta, "I_alpha": rate_I_alpha, "I_alpha_r": rate_I_alpha_r,
        "I1": rate_I1, "I2": rate_I2, "I3": rate_I3, "I4": rate_I4,
        "Mr_hpydp": rate_Mr_hpydp, "Mr_hpyp": rate_Mr_hpyp,
        "xi_dp": rate_xi_dp, "xi_py": rate_xi_py,
    }[name]
    out = fn(x, *args)
    if isinstance(out, LegendreResult):
        return out
    return LegendreResult(x, out, math.nan, True, "closed form")
