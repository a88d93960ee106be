"""Budgeted, box-bounded minimization with inequality constraints.

The outer loop is an augmented Lagrangian over ``c_k(x) <= 0`` using the
``max(0, .)^2`` form

    L(x) = f(x) + sum_k [max(0, lam_k + mu c_k(x))^2 - lam_k^2] / (2 mu)

and each inner problem is solved by scipy's bound-constrained L-BFGS-B.
One evaluation is one call of the objective/constraint callback with
gradients; the budget counts those calls and is never exceeded.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from . import maskfield

log = logging.getLogger(__name__)

CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget-exhausted"
STALLED = "stalled"
INFEASIBLE = "infeasible"


class _BudgetExhausted(Exception):
    pass


class _CallbackFailed(Exception):
    pass


@dataclass
class NlpProblem:
    """Minimize ``fun`` subject to ``constraints <= 0`` inside ``[lower, upper]``.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> (f, grad)``. With ``joint=True`` it instead returns
        ``(f, grad, c, jac)`` with ``c`` of shape ``(k,)`` and ``jac`` of
        shape ``(k, n)``, which lets objective and constraints share work.
    x0 : array_like
    lower, upper : array_like
        Finite box bounds.
    constraints : sequence of callables
        Each ``c(x) -> (value, grad)``; ignored when ``joint=True``.
    eval_budget : int
    n_constraints : int
        Required with ``joint=True``.
    angle_indices : array_like of int
        Entries reported wrapped to ``[-pi, pi]``.
    on_evaluation : callable, optional
        ``on_evaluation(x, f, c)`` after every evaluation.
    on_outer : callable, optional
        ``on_outer(x)`` before every outer iteration after the first, e.g. to
        refresh data the callbacks close over.
    """

    fun: object
    x0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    constraints: tuple = ()
    eval_budget: int = 100
    joint: bool = False
    n_constraints: int = None
    angle_indices: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))
    on_evaluation: object = None
    on_outer: object = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), self.x0.shape).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), self.x0.shape).copy()
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if self.eval_budget < 1:
            raise ValueError("evaluation budget must be at least 1")
        if self.joint:
            if self.n_constraints is None:
                raise ValueError("n_constraints is required with joint=True")
        else:
            self.n_constraints = len(self.constraints)

    @property
    def dim(self):
        return len(self.x0)

    def evaluate(self, x):
        """``(f, grad, c, jac)`` at ``x``."""
        if self.joint:
            f, g, c, J = self.fun(x)
            return float(f), np.asarray(g, float), np.asarray(c, float).reshape(-1), np.asarray(J, float).reshape(-1, len(x))
        f, g = self.fun(x)
        cs, Js = [], []
        for con in self.constraints:
            ci, gi = con(x)
            cs.append(float(ci))
            Js.append(np.asarray(gi, float))
        J = np.array(Js).reshape(len(cs), len(x))
        return float(f), np.asarray(g, float), np.array(cs), J


@dataclass
class NlpResult:
    x_star: np.ndarray
    f_star: float
    constraint_values: np.ndarray
    evals_used: int
    status: str
    multipliers: np.ndarray
    outer_iterations: int
    first_order: float
    # augmented objective at every accepted inner step, one list per outer
    trace: list = field(default_factory=list, repr=False)

    @property
    def max_violation(self):
        c = self.constraint_values
        return float(max(0.0, c.max())) if c.size else 0.0


def _first_order(x, g, J, lam, lower, upper):
    """Infinity norm of the projected gradient of the Lagrangian."""
    gl = g + J.T @ lam if lam.size else g
    return float(np.max(np.abs(np.clip(x - gl, lower, upper) - x))) if x.size else 0.0


def minimize(
    problem,
    *,
    mu0=10.0,
    mu_max=1e10,
    max_outer=50,
    inner_budget=None,
    tol_opt=1e-6,
    tol_feas=1e-8,
    tol_step=1e-10,
    lam0=None,
):
    """Run the augmented-Lagrangian loop on ``problem``.

    Parameters
    ----------
    problem : NlpProblem
    mu0, mu_max : float
        Initial and largest penalty parameter. ``mu`` grows tenfold whenever
        an outer iteration fails to cut the violation by a factor of 4.
    max_outer : int
    inner_budget : int, optional
        Cap on evaluations per inner solve (default: whatever remains).
    tol_opt : float
        Stop when the projected Lagrangian gradient falls below this and the
        constraints hold to ``tol_feas``.
    tol_step : float
        An outer iteration moving less than this counts as stalled.
    lam0 : array_like, optional
        Warm-start multipliers.

    Returns
    -------
    NlpResult
        Status is ``converged``, ``budget-exhausted``, ``stalled`` or
        ``infeasible`` (stationary but with violated constraints).
    """
    p = problem
    lo, hi = p.lower, p.upper
    k = p.n_constraints
    lam = np.zeros(k) if lam0 is None else np.maximum(np.asarray(lam0, float), 0.0).copy()
    mu = float(mu0)
    state = {"evals": 0}
    cache = {}

    def evaluate(x):
        key = x.tobytes()
        if key in cache:
            return cache[key]
        if state["evals"] >= state["limit"]:
            raise _BudgetExhausted
        state["evals"] += 1
        try:
            vals = p.evaluate(x.copy())
        except Exception as exc:  # FE failures and the like
            log.warning("callback failed: %s", exc)
            raise _CallbackFailed from exc
        if not (np.isfinite(vals[0]) and np.all(np.isfinite(vals[1]))):
            raise _CallbackFailed
        cache[key] = vals
        if p.on_evaluation is not None:
            p.on_evaluation(x.copy(), vals[0], vals[2])
        return vals

    x = np.clip(p.x0, lo, hi)
    state["limit"] = p.eval_budget
    try:
        f, g, c, J = evaluate(x)
    except (_BudgetExhausted, _CallbackFailed):
        raise RuntimeError("initial point could not be evaluated")

    status = None
    trace = []
    prev_viol = np.inf
    outer = 0
    for outer in range(1, max_outer + 1):
        if outer > 1 and p.on_outer is not None:
            p.on_outer(x.copy())
            cache.clear()
            try:
                f, g, c, J = evaluate(x)
            except _BudgetExhausted:
                status = BUDGET_EXHAUSTED
                break
            except _CallbackFailed:
                status = STALLED
                break

        lam_k, mu_k = lam.copy(), mu

        def aug(z, lam_k=lam_k, mu_k=mu_k):
            fz, gz, cz, Jz = evaluate(z)
            t = np.maximum(0.0, lam_k + mu_k * cz)
            val = fz + (t @ t - lam_k @ lam_k) / (2 * mu_k)
            grad = gz + Jz.T @ t if k else gz
            return val, grad

        accepted = {"x": x.copy()}
        steps = [aug(x)[0]]

        def on_step(z):
            accepted["x"] = np.array(z, dtype=float)
            steps.append(aug(accepted["x"])[0])

        remaining = p.eval_budget - state["evals"]
        cap = remaining if inner_budget is None else min(remaining, inner_budget)
        state["limit"] = state["evals"] + cap
        start = x.copy()
        stop = None
        try:
            _scipy_minimize(
                aug,
                x,
                jac=True,
                method="L-BFGS-B",
                bounds=list(zip(lo, hi)),
                callback=on_step,
                options={"maxiter": 10**6, "maxfun": 10**6, "ftol": 1e-15, "gtol": tol_opt * 1e-2, "maxcor": 20},
            )
        except _BudgetExhausted:
            if state["evals"] >= p.eval_budget:
                stop = BUDGET_EXHAUSTED
        except _CallbackFailed:
            stop = STALLED
        state["limit"] = p.eval_budget
        trace.append(steps)

        # continue from the last accepted iterate; L-BFGS-B only accepts
        # points it has already evaluated, and they respect the bounds
        x = accepted["x"]
        if x.tobytes() not in cache:
            x = start
        f, g, c, J = cache[x.tobytes()]
        cache = {x.tobytes(): (f, g, c, J)}

        lam = np.maximum(0.0, lam + mu * c) if k else lam
        viol = float(max(0.0, c.max())) if k else 0.0
        kkt = _first_order(x, g, J, lam, lo, hi)
        if stop is not None:
            status = stop
            break
        if kkt < tol_opt and viol <= tol_feas:
            status = CONVERGED
            break
        moved = float(np.max(np.abs(x - start))) if x.size else 0.0
        if moved < tol_step and outer > 1:
            if viol > tol_feas:
                status = INFEASIBLE if mu >= mu_max else None
            else:
                status = CONVERGED if kkt < tol_opt * 1e2 else STALLED
            if status is not None:
                break
        if viol > 0.25 * prev_viol and viol > tol_feas:
            if mu >= mu_max:
                status = INFEASIBLE
                break
            mu = min(mu * 10.0, mu_max)
        prev_viol = viol
        if state["evals"] >= p.eval_budget:
            status = BUDGET_EXHAUSTED
            break
    if status is None:
        status = INFEASIBLE if (k and c.max() > tol_feas) else STALLED

    x_rep = x.copy()
    if len(p.angle_indices):
        x_rep[p.angle_indices] = maskfield.wrap_angle(x_rep[p.angle_indices])
    return NlpResult(
        x_star=x_rep,
        f_star=float(f),
        constraint_values=np.asarray(c, float).copy(),
        evals_used=state["evals"],
        status=status,
        multipliers=lam.copy(),
        outer_iterations=outer,
        first_order=_first_order(x, g, J, lam, lo, hi),
        trace=trace,
    )
