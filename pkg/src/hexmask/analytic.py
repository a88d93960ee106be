"""Closed-form KKT analysis of the three-truss sizing problem.

Three bars of unit modulus, thickness and length sqrt(2) carry a unit load.
With widths ``x1, x2, x3`` the strain energy is

    SE = C (x1 + x2 + x3) / (x1 x2 + x1 x3) = C / x1 + C / (x2 + x3)

with ``C = 1 / (2 sqrt 2)``. The problem is

    minimize SE  s.t.  g1 = x1 + x2 + x3 - V* <= 0,
                       g2 = sum_i (x_m - x_i)^p - eps1 <= 0.

A two-member variant drops ``x2`` so that ``SE = C / x1 + C / x3``.
Every stationary case is enumerated in closed form (one scalar root-find
for the penalty-only case at ``p = 2``); the minimum-SE feasible case is
flagged as best.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

C = 1.0 / (2.0 * math.sqrt(2.0))

THREE_MEMBER = "three-member"
TWO_MEMBER = "two-member"

CASE_I = "I"
CASE_II = "II"
CASE_III = "III"

# absolute slack used when checking constraint signs and multiplier signs
_TOL = 1e-9


def strain_energy(x1, x2, x3):
    """Strain energy of the three-truss for widths ``x1, x2, x3``."""
    if x1 <= 0 or x2 + x3 <= 0:
        raise ZeroDivisionError("x1 and x2 + x3 must be positive (no load path otherwise)")
    return C * (x1 + x2 + x3) / (x1 * x2 + x1 * x3)


@dataclass(frozen=True)
class TrussSpec:
    p: int
    v_star: float
    x_m: float
    eps1: float
    skeleton: str = THREE_MEMBER

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError(f"p must be 1 or 2, got {self.p}")
        if not (self.v_star > 0 and self.x_m > 0 and self.eps1 >= 0):
            raise ValueError("need v_star > 0, x_m > 0, eps1 >= 0")
        if self.skeleton not in (THREE_MEMBER, TWO_MEMBER):
            raise ValueError(f"unknown skeleton {self.skeleton!r}")

    @property
    def n_members(self):
        return 3 if self.skeleton == THREE_MEMBER else 2


@dataclass
class KktSolution:
    """One stationary case.

    ``widths`` is always ``(x1, x2, x3)``; ``x2 = 0`` for the two-member
    skeleton. ``v_star_bounds`` is the interval of ``V*`` for which the case
    can be feasible (``None`` when it has no closed form).
    """

    case: str
    widths: tuple
    multipliers: tuple
    feasible: bool
    strain_energy: float = math.nan
    g: tuple = (math.nan, math.nan)
    v_star_bounds: tuple = None
    note: str = ""
    best: bool = False
    extras: dict = field(default_factory=dict)


def _se(spec, w):
    x1, x2, x3 = w
    if spec.skeleton == TWO_MEMBER:
        return C / x1 + C / x3
    return strain_energy(x1, x2, x3)


def constraints(spec, w):
    """``(g1, g2)`` at widths ``w = (x1, x2, x3)``."""
    xs = np.asarray(w, dtype=float)
    if spec.skeleton == TWO_MEMBER:
        xs = xs[[0, 2]]
    g1 = float(xs.sum() - spec.v_star)
    g2 = float(np.sum((spec.x_m - xs) ** spec.p) - spec.eps1)
    return g1, g2


def _finish(spec, case, w, lam, bounds=None, note="", structural=True):
    """Fill in SE/constraints and decide feasibility of a candidate."""
    w = tuple(float(v) for v in w)
    lam = tuple(float(v) for v in lam)
    if not structural or any(not math.isfinite(v) for v in w):
        return KktSolution(case, w, lam, False, v_star_bounds=bounds, note=note)
    g = constraints(spec, w)
    scale = max(1.0, spec.v_star, spec.eps1)
    ok = (
        min(w) >= -_TOL
        and w[0] > 0
        and w[1] + w[2] > 0
        and g[0] <= _TOL * scale
        and g[1] <= _TOL * scale
        and all(v >= -_TOL * max(1.0, abs(v)) for v in lam)
    )
    se = _se(spec, w) if w[0] > 0 and (w[1] + w[2]) > 0 else math.inf
    return KktSolution(case, w, lam, bool(ok), se, g, bounds, note)


# ---------------------------------------------------------------- p = 1


def _p1_cases(spec):
    V, xm, e, n = spec.v_star, spec.x_m, spec.eps1, spec.n_members
    lam1 = 4 * C / V**2
    if spec.skeleton == THREE_MEMBER:
        w = (V / 2, V / 4, V / 4)
    else:
        w = (V / 2, 0.0, V / 2)
    bound_i = (n * xm - e, math.inf)
    case1 = _finish(spec, CASE_I, w, (lam1, 0.0), bound_i, "x1 = V*/2; needs n x_m <= V* + eps1")
    case2 = KktSolution(
        CASE_II, (math.nan,) * 3, (0.0, -C / (V / 2) ** 2), False,
        note="stationarity gives lam2 = -C/x1^2 < 0; no solution",
    )
    # g1 = g2 = 0 forces V* = n x_m - eps1; the split lam1 - lam2 = 4C/V*^2
    # is not unique, the smallest multipliers are reported
    on_line = abs(V - (n * xm - e)) <= 1e-9 * max(1.0, V)
    case3 = _finish(
        spec, CASE_III, w, (lam1, 0.0), (n * xm - e, n * xm - e),
        "active only when V* = n x_m - eps1 exactly", structural=on_line,
    )
    return [case1, case2, case3]


# ---------------------------------------------------------------- p = 2


def _root_above(xm, k):
    """Unique root ``x > x_m`` of ``x^2 (x - x_m) = k`` for ``k > 0``."""
    # x^3 - x_m x^2 - k has exactly one positive root (one sign change)
    roots = np.roots([1.0, -xm, 0.0, -k])
    x = float(max(r.real for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r))))
    for _ in range(3):  # Newton polish
        x -= (x * x * (x - xm) - k) / (3 * x * x - 2 * xm * x)
    return x


def _p2_three(spec):
    V, xm, e = spec.v_star, spec.x_m, spec.eps1
    out = []

    # Case I: lam2 = 0, g1 active; x2 + x3 = V*/2, the split that minimizes
    # g2 is the symmetric one
    disc_arg = 6 * e - 2 * xm**2
    bounds = None
    if disc_arg >= 0:
        r = (2.0 / 3.0) * math.sqrt(disc_arg)
        bounds = (8 * xm / 3 - r, 8 * xm / 3 + r)
    D = -3 * V**2 + 16 * xm * V - 24 * xm**2 + 8 * e
    sol = _finish(spec, CASE_I, (V / 2, V / 4, V / 4), (4 * C / V**2, 0.0), bounds,
                  "x1 = V*/2, x2 + x3 = V*/2; feasible split exists iff D >= 0")
    sol.extras["D"] = D
    if sol.feasible and D >= 0:
        sol.extras["x2_range"] = (V / 4 - math.sqrt(D) / 4, V / 4 + math.sqrt(D) / 4)
    out.append(sol)

    # Case II: lam1 = 0, g2 active, x2 = x3.
    # x1 - x_m = C / (2 lam2 x1^2), x2 - x_m = C / (8 lam2 x2^2)
    if e > 0:
        def widths(lam2):
            return _root_above(xm, C / (2 * lam2)), _root_above(xm, C / (8 * lam2))

        def g2(log_lam):
            x1, x2 = widths(math.exp(log_lam))
            return (x1 - xm) ** 2 + 2 * (x2 - xm) ** 2 - e

        lo, hi = -50.0, 50.0
        while g2(lo) < 0:
            lo -= 50
        while g2(hi) > 0:
            hi += 50
        lam2 = math.exp(brentq(g2, lo, hi, xtol=1e-14))
        x1, x2 = widths(lam2)
        sol = _finish(spec, CASE_II, (x1, x2, x2), (0.0, lam2), None,
                      "needs eps1 > 0 and V* >= 3 x_m + delta1 + 2 delta2")
        sol.extras.update(delta1=x1 - xm, delta2=x2 - xm)
        sol.v_star_bounds = (3 * xm + (x1 - xm) + 2 * (x2 - xm), math.inf)
    else:
        sol = KktSolution(CASE_II, (math.nan,) * 3, (0.0, math.nan), False,
                          note="eps1 = 0 leaves no finite lam2")
    out.append(sol)

    # Case III: both active, x2 = x3 = V*/3 + delta3
    bounds = (3 * xm - math.sqrt(3 * e), 3 * xm + math.sqrt(3 * e))
    disc = 16 * V**2 - 24 * (3 * xm**2 - 2 * V * xm + V**2 - e)
    if disc < 0:
        out.append(KktSolution(CASE_III, (math.nan,) * 3, (math.nan, math.nan), False,
                               v_star_bounds=bounds, note="negative discriminant"))
        return out
    for sign in (1.0, -1.0):
        d3 = sign * math.sqrt(disc) / 12
        x2 = V / 3 + d3
        x1 = V - 2 * x2
        lam1, lam2 = _p2_multipliers(x1, x2, xm)
        sol = _finish(spec, CASE_III, (x1, x2, x2), (lam1, lam2), bounds,
                      f"delta3 = {d3:+.6g}", structural=x1 > 0 and x2 > 0)
        sol.extras["delta3"] = d3
        out.append(sol)
    return out


def _p2_multipliers(x1, x2, xm):
    """Solve the two independent stationarity equations for (lam1, lam2).

    -C/x1^2 + lam1 + 2 lam2 (x1 - x_m) = 0
    -C/(4 x2^2) + lam1 + 2 lam2 (x2 - x_m) = 0
    """
    if abs(x1 - x2) < 1e-12:
        # all widths equal: lam2 is not identifiable, take the smallest
        return C / x1**2, 0.0
    lam2 = (C / x1**2 - C / (4 * x2**2)) / (2 * (x1 - x2))
    lam1 = C / (4 * x2**2) - 2 * lam2 * (x2 - xm)
    return lam1, lam2


def _p2_two(spec):
    V, xm, e = spec.v_star, spec.x_m, spec.eps1
    out = []
    r = math.sqrt(e / 2)
    out.append(_finish(spec, CASE_I, (V / 2, 0.0, V / 2), (4 * C / V**2, 0.0),
                       (2 * (xm - r), 2 * (xm + r)), "x1 = x3 = V*/2"))
    if e > 0:
        # x1 and x3 solve the same cubic, so they coincide: delta = sqrt(eps1/2)
        x = xm + r
        lam2 = C / (2 * x * x * r)
        out.append(_finish(spec, CASE_II, (x, 0.0, x), (0.0, lam2), (2 * x, math.inf),
                           "x1 = x3 = x_m + sqrt(eps1/2); needs V* >= 2 x_m + 2 sqrt(eps1/2)"))
    else:
        out.append(KktSolution(CASE_II, (math.nan,) * 3, (0.0, math.nan), False,
                               note="eps1 = 0 leaves no finite lam2"))
    bounds = (2 * xm - math.sqrt(2 * e), 2 * xm + math.sqrt(2 * e))
    disc = 2 * e - (V - 2 * xm) ** 2
    if disc < 0:
        out.append(KktSolution(CASE_III, (math.nan,) * 3, (math.nan, math.nan), False,
                               v_star_bounds=bounds, note="negative discriminant"))
        return out
    for sign in (1.0, -1.0):
        x3 = V / 2 + sign * math.sqrt(disc) / 2
        x1 = V - x3
        if abs(x1 - x3) < 1e-12:
            lam = (C / x1**2, 0.0)
        else:
            lam2 = (C / x1**2 - C / x3**2) / (2 * (x1 - x3))
            lam = (C / x1**2 - 2 * lam2 * (x1 - xm), lam2)
        out.append(_finish(spec, CASE_III, (x1, 0.0, x3), lam, bounds,
                           "x3 = V*/2 +- sqrt(2 eps1 - (V* - 2 x_m)^2)/2",
                           structural=x1 > 0 and x3 > 0))
    return out


def kkt_solve(spec):
    """All stationary cases of ``spec``; the best feasible one is flagged.

    Returns
    -------
    list of KktSolution
    """
    if spec.p == 1:
        sols = _p1_cases(spec)
    elif spec.skeleton == THREE_MEMBER:
        sols = _p2_three(spec)
    else:
        sols = _p2_two(spec)
    feas = [s for s in sols if s.feasible]
    if feas:
        min(feas, key=lambda s: s.strain_energy).best = True
    return sols


def is_feasible(spec):
    """Feasibility verdict: some stationary case is feasible."""
    return any(s.feasible for s in kkt_solve(spec))


def best_solution(spec):
    for s in kkt_solve(spec):
        if s.best:
            return s
    return None


def case_table(spec):
    """Human-readable table of all cases."""
    lines = [f"three-truss p={spec.p} V*={spec.v_star:g} x_m={spec.x_m:g} eps1={spec.eps1:g} ({spec.skeleton})"]
    lines.append(f"{'case':<5}{'feasible':<10}{'x1':>12}{'x2':>12}{'x3':>12}{'lam1':>12}{'lam2':>12}{'SE':>12}  note")
    for s in kkt_solve(spec):
        flag = ("yes*" if s.best else "yes") if s.feasible else "no"
        nums = "".join(f"{v:12.6g}" for v in (*s.widths, *s.multipliers, s.strain_energy))
        lines.append(f"{s.case:<5}{flag:<10}{nums}  {s.note}")
    return "\n".join(lines)


# ------------------------------------------------------ brute-force oracle


def grid_feasible(spec, step=0.01):
    """Feasibility by exhaustive search over widths in ``[0, V*]^n``.

    The grid has spacing ``step``. ``g2`` is separable, so the minimum of
    ``g2`` subject to ``sum x <= V*`` is found with an O(n^2) pairwise
    minimum followed by a prefix minimum instead of enumerating all triples.

    Returns
    -------
    feasible : bool
    min_g2 : float
        Smallest ``g2`` over grid points with ``g1 <= 0`` and a load path.
    """
    n = int(math.floor(spec.v_star / step + 1e-9))
    xs = np.arange(n + 1) * step
    f = (spec.x_m - xs) ** spec.p
    if spec.skeleton == TWO_MEMBER:
        # x1 and x3 both need at least one step; i + k <= n
        pref = np.minimum.accumulate(np.concatenate([[math.inf], f[1:]]))
        best = min(f[i] + pref[n - i] for i in range(1, n)) if n >= 2 else math.inf
        min_g2 = best - spec.eps1
        return bool(min_g2 <= 0), float(min_g2)
    # h[s] = min over j + k = s of f[j] + f[k]  (x2 + x3 = s step), s >= 1
    h = np.full(n + 1, math.inf)
    for s in range(1, n + 1):
        j = np.arange(0, s + 1)
        h[s] = np.min(f[j] + f[s - j])
    H = np.minimum.accumulate(h)
    best = min(f[i] + H[n - i] for i in range(1, n)) if n >= 2 else math.inf
    min_g2 = best - spec.eps1
    return bool(min_g2 <= 0), float(min_g2)


def min_g2_continuous(spec):
    """Smallest ``g2`` over ``x >= 0`` with ``sum x <= V*`` (closed form)."""
    n = spec.n_members
    V, xm = spec.v_star, spec.x_m
    if spec.p == 1:
        return n * xm - V - spec.eps1
    if V >= n * xm:
        return -spec.eps1
    return (n * xm - V) ** 2 / n - spec.eps1


# ------------------------------------------------------ numeric comparison


@dataclass
class CrossCheck:
    spec: TrussSpec
    numeric: object
    reference: KktSolution
    x_error: float
    f_gap: float
    numeric_case: str

    @property
    def matches(self):
        return self.reference is not None and self.x_error < 1e-4 and self.f_gap < 1e-6


def _numeric_case(spec, res, tol=1e-6):
    """Classify a numeric solution by its active constraints."""
    g1, g2 = res.constraint_values
    lam1, lam2 = res.multipliers
    a1 = abs(g1) <= tol and lam1 > tol
    a2 = abs(g2) <= tol and lam2 > tol
    if a1 and a2:
        return CASE_III
    if a1:
        return CASE_I
    if a2:
        return CASE_II
    return "none"


def numeric_cross_check(spec, eval_budget=2000):
    """Solve ``spec`` numerically and compare with the best closed-form case.

    The run starts from a symmetric point (``x2 = x3``) inside the box
    ``[1e-3, V*]^3``.
    """
    from .optimizer import NlpProblem, minimize

    V, xm, e, p = spec.v_star, spec.x_m, spec.eps1, spec.p
    two = spec.skeleton == TWO_MEMBER
    idx = [0, 2] if two else [0, 1, 2]

    def full(z):
        w = np.zeros(3)
        w[idx] = z
        return w

    def fun(z):
        w = full(z)
        if two:
            return C / z[0] + C / z[1], np.array([-C / z[0] ** 2, -C / z[1] ** 2])
        s = w[1] + w[2]
        return C / w[0] + C / s, np.array([-C / w[0] ** 2, -C / s**2, -C / s**2])

    def c1(z):
        return z.sum() - V, np.ones(len(z))

    def c2(z):
        return np.sum((xm - z) ** p) - e, -p * (xm - z) ** (p - 1)

    x0 = np.full(len(idx), 0.8 * V / len(idx))
    prob = NlpProblem(fun, x0, 1e-3, V, constraints=(c1, c2), eval_budget=eval_budget)
    res = minimize(prob)
    ref = best_solution(spec)
    w = full(res.x_star)
    if ref is None:
        return CrossCheck(spec, res, None, math.inf, math.inf, _numeric_case(spec, res))
    x_err = float(np.max(np.abs(w - np.array(ref.widths))))
    gap = abs(res.f_star - ref.strain_energy)
    return CrossCheck(spec, res, ref, x_err, gap, _numeric_case(spec, res))
