"""Two-stage Sequence-of-Length-Scales driver.

Stage I optimizes with the volume constraint alone and lowers the volume
fraction until the maximum length scale holds. Stage II imposes volume,
minimum and maximum length scale constraints together and, after every
optimization step, adjusts the volume fraction and the relaxations
``eps1 = eps2`` according to which constraints were met:

* volume violated: ``vf += max(g1, 1) / Ncells``;
* both length scales met: accept;
* only ``g_min`` violated: ``vf += g_min / Ncells``, ``eps += eps_int``;
* only ``g_max`` violated: ``vf -= g_max / Ncells``, ``eps += eps_int``;
* both violated: ``eps += delta_eps``.

``vf`` is always clamped to ``[vf_min, vf_max]``.
"""

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem, lengthscale, maskfield, postproc
from .lengthscale import LengthScaleSpec
from .optimizer import NlpProblem, minimize
from .skeleton import skeletonize

log = logging.getLogger(__name__)

STAGE_I = "I"
STAGE_II = "II"

ACCEPT = "accept"
RAISE_VOLUME = "raise-vf"  # volume constraint violated
MORE_MATERIAL = "b: vf += gmin/N"
LESS_MATERIAL = "c: vf -= gmax/N"
RELAX = "d: eps += delta_eps"
REDUCE_VF = "stage-I: vf -= gmax/N"
STAGE1_DONE = "stage-I: max_ls met"
STAGE1_EXHAUSTED = "stage1-exhausted"

ACCEPTED = "accepted"
BUDGET_EXHAUSTED = "budget-exhausted"

HISTORY_COLUMNS = ("eval", "phi", "g1", "gmin", "gmax", "vf", "eps1", "eps2", "bwi")


@dataclass(frozen=True)
class SLSConfig:
    spec: LengthScaleSpec
    vf_init: float = 0.2
    vf_min: float = 0.1
    vf_max: float = 0.5
    tol_init: float = 1.0
    delta_eps: float = 10.0
    eps_int: float = None
    stage_budget: int = 100
    total_budget: int = 6000
    stage1_passes: int = 10
    # evaluations between skeleton and region rebuilds inside one step;
    # None means max(10, stage_budget // 4)
    refresh_every: int = None
    continuation: tuple = ()
    deletion_threshold: float = 1e-6
    # the optimizer aims at (1 - margin) V* so that the reported g1 <= 0
    volume_margin: float = 0.01
    # constraint normalizations inside a step: the volume constraint is
    # divided by ``volume_scale * Ncells`` and the length-scale ones by
    # ``lengthscale_scale * V*``; a small volume scale makes the optimizer
    # honour the volume bound first, which the update rules presuppose
    volume_scale: float = 0.05
    lengthscale_scale: float = 3.0
    mu0: float = 10.0
    # an unreachable eps would otherwise let the penalty swamp the objective
    mu_max: float = 10.0
    # reuse the multipliers of the previous step as the starting estimate
    warm_start: bool = True

    def __post_init__(self):
        if not 0 < self.vf_min <= self.vf_init <= self.vf_max <= 1:
            raise ValueError("need 0 < vf_min <= vf_init <= vf_max <= 1")
        if not self.delta_eps > 0:
            raise ValueError("delta_eps must be positive")
        if self.tol_init < 0:
            raise ValueError("tol_init must be non-negative")
        if self.eps_int is None:
            object.__setattr__(self, "eps_int", self.tol_init)
        if self.stage_budget < 2 or self.total_budget < 2:
            raise ValueError("budgets must allow at least two evaluations")
        if self.refresh_every is not None and self.refresh_every < 2:
            raise ValueError("refresh_every must be at least 2")


@dataclass(frozen=True)
class HistoryRow:
    eval: int
    phi: float
    g1: float
    gmin: float
    gmax: float
    vf: float
    eps1: float
    eps2: float
    bwi: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in HISTORY_COLUMNS)


@dataclass(frozen=True)
class StepRecord:
    stage: str
    vf: float
    eps: float
    phi: float
    g1: float
    gmin: float
    gmax: float
    evals: int
    optimizer_status: str
    action: str
    n_masks: int


@dataclass(eq=False)
class Measurement:
    """A design evaluated with a freshly computed skeleton."""

    field: object
    result: object
    phi: float
    g1: float
    gmin: float
    gmax: float
    bwi: float
    skeleton: object
    regions: object


@dataclass(eq=False)
class SLSState:
    config: SLSConfig
    n_cells: int
    masks: object
    stage: str = STAGE_I
    vf: float = None
    eps1: float = None
    eps2: float = None
    history: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    status: str = None
    warnings: list = field(default_factory=list)
    final: Measurement = None
    multipliers: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.vf is None:
            self.vf = self.config.vf_init
        if self.eps1 is None:
            self.eps1 = self.config.tol_init
        if self.eps2 is None:
            self.eps2 = self.config.tol_init

    @property
    def evals_used(self):
        return len(self.history)

    def clamp_vf(self, vf):
        return float(np.clip(vf, self.config.vf_min, self.config.vf_max))


@dataclass(eq=False)
class TopologyProblem:
    """Everything the driver needs besides the SLS parameters."""

    model: fem.FEModel
    masks: maskfield.MaskSet
    axis_lower: float
    axis_upper: float
    kind: str = fem.COMPLIANCE
    scale: float = 1.0
    margin: float = None

    def __post_init__(self):
        if self.margin is None:
            self.margin = self.axis_upper

    @property
    def grid(self):
        return self.model.grid

    def bounds(self, n_masks):
        return maskfield.parameter_bounds(n_masks, self.grid.bounds, self.axis_lower, self.axis_upper, self.margin)


# ------------------------------------------------------------ evaluation


def measure(problem, masks, vf, spec):
    """Objective, constraints and BWI of ``masks`` with a fresh skeleton."""
    grid = problem.grid
    fld = maskfield.evaluate_field(grid, masks, problem.model.rho_min)
    phi, _, res = fem.objective_density_gradient(problem.model, fld, problem.kind, problem.scale)
    skel = skeletonize(grid, fld.binary())
    regions = lengthscale.build_regions(grid, skel, spec)
    return Measurement(
        field=fld,
        result=res,
        phi=float(phi),
        g1=float(fld.rho.sum() - vf * grid.n_cells),
        gmin=lengthscale.g_min(fld, regions, spec),
        gmax=lengthscale.g_max(fld, regions, spec),
        bwi=postproc.bwi(fld),
        skeleton=skel,
        regions=regions,
    )


def optimize_step(problem, state, with_lengthscale, budget, inner_budget=None):
    """One budgeted optimization at the state's ``vf`` and ``eps``.

    Regions are rebuilt from the current design before every outer
    iteration of the optimizer and held fixed inside it.

    Returns
    -------
    masks : MaskSet
    result : NlpResult
    """
    cfg = state.config
    spec = cfg.spec
    grid = problem.grid
    pts = grid.centroids
    n = grid.n_cells
    masks0 = state.masks
    v_star = state.vf * n
    target = v_star * (1.0 - cfg.volume_margin)
    e1, e2 = state.eps1, state.eps2
    vscale = cfg.volume_scale * n
    lscale = cfg.lengthscale_scale * max(v_star, 1.0)

    def regions_of(x):
        fld = maskfield.evaluate_field(grid, masks0.with_vector(x), problem.model.rho_min)
        return lengthscale.build_regions(grid, skeletonize(grid, fld.binary()), spec)

    holder = {"regions": regions_of(masks0.vector)}
    phi0 = abs(measure_phi(problem, masks0))
    fscale = phi0 if phi0 > 0 else 1.0

    def fun(x):
        m = masks0.with_vector(x)
        fld = maskfield.evaluate_field(grid, m, problem.model.rho_min)
        phi, dphi, _ = fem.objective_density_gradient(problem.model, fld, problem.kind, problem.scale)
        regions = holder["regions"]
        gmin = lengthscale.g_min(fld, regions, spec)
        gmax = lengthscale.g_max(fld, regions, spec)
        vol = float(fld.rho.sum())
        cols = [dphi / fscale, np.full(n, 1.0 / vscale)]
        c = [(vol - target) / vscale]
        if with_lengthscale:
            dmin, dmax = lengthscale.density_gradients(fld, regions, spec)
            cols += [dmin / lscale, dmax / lscale]
            c += [(gmin - e1) / lscale, (gmax - e2) / lscale]
        grads = maskfield.density_vjp(m, pts, np.column_stack(cols))
        state.history.append(
            HistoryRow(len(state.history) + 1, float(phi), vol - v_star, gmin, gmax, state.vf, e1, e2, postproc.bwi(fld))
        )
        return phi / fscale, grads[0], np.array(c), grads[1:]

    def refresh(x):
        holder["regions"] = regions_of(x)

    lower, upper = problem.bounds(len(masks0))
    key = "ls" if with_lengthscale else "vol"
    nlp = NlpProblem(
        fun,
        np.clip(masks0.vector, lower, upper),
        lower,
        upper,
        eval_budget=budget,
        joint=True,
        n_constraints=3 if with_lengthscale else 1,
        angle_indices=np.arange(4, masks0.params.size, maskfield.N_PARAMS),
        on_outer=refresh,
    )
    res = minimize(
        nlp,
        mu0=cfg.mu0,
        mu_max=cfg.mu_max,
        inner_budget=inner_budget or max(10, budget // 4),
        lam0=state.multipliers.get(key) if cfg.warm_start else None,
    )
    state.multipliers[key] = res.multipliers
    return masks0.with_vector(res.x_star), res


def measure_phi(problem, masks):
    fld = maskfield.evaluate_field(problem.grid, masks, problem.model.rho_min)
    return fem.objective_density_gradient(problem.model, fld, problem.kind, problem.scale)[0]


# ------------------------------------------------------------ update rules


def stage1_update(state, gmax):
    """Stage-I volume reduction: ``vf -= g_max / Ncells`` (not below vf_min)."""
    return state.clamp_vf(state.vf - gmax / state.n_cells)


def stage2_step(state, g1, gmin, gmax):
    """Apply the Stage-II update rules.

    Returns
    -------
    state : SLSState
        A copy with updated ``vf``, ``eps1`` and ``eps2``.
    action : str
    """
    cfg = state.config
    n = state.n_cells
    vf, e1, e2 = state.vf, state.eps1, state.eps2
    if g1 > 0:
        vf = state.clamp_vf(vf + max(g1, 1.0) / n)
        action = RAISE_VOLUME
    elif gmin <= e1 and gmax <= e2:
        action = ACCEPT
    elif gmax <= e2:
        vf = state.clamp_vf(vf + gmin / n)
        e1, e2 = e1 + cfg.eps_int, e2 + cfg.eps_int
        action = MORE_MATERIAL
    elif gmin <= e1:
        vf = state.clamp_vf(vf - gmax / n)
        e1, e2 = e1 + cfg.eps_int, e2 + cfg.eps_int
        action = LESS_MATERIAL
    else:
        e1, e2 = e1 + cfg.delta_eps, e2 + cfg.delta_eps
        action = RELAX
    return dataclasses.replace(state, vf=vf, eps1=e1, eps2=e2), action


def mask_deletion(problem, masks, field, result, threshold=1e-6):
    """Drop positive masks that only enclose cells with negligible energy.

    A mask encloses the cells whose centroids lie inside its ellipse; a mask
    enclosing no centroid delivers no cell and is dropped as well. The last
    remaining mask is never dropped.

    Returns
    -------
    MaskSet
    """
    if masks.polarity != maskfield.POSITIVE or len(masks) <= 1:
        return masks
    sed = fem.strain_energy_density(problem.model, result, field)
    low = sed < threshold
    inside = maskfield.measure_matrix(masks.params, problem.grid.centroids) < 0
    drop = np.array([bool(np.all(low[inside[:, j]])) for j in range(len(masks))])
    if drop.all():
        drop[0] = False
    return masks.subset(np.flatnonzero(~drop)) if drop.any() else masks


# ------------------------------------------------------------ driver


def _remaining(state):
    return state.config.total_budget - state.evals_used


def _step(problem, state, with_ls):
    budget = min(state.config.stage_budget, _remaining(state))
    before = state.evals_used
    masks, res = optimize_step(problem, state, with_ls, budget, state.config.refresh_every)
    meas = measure(problem, masks, state.vf, state.config.spec)
    new_masks = mask_deletion(problem, masks, meas.field, meas.result, state.config.deletion_threshold)
    if len(new_masks) != len(masks):
        log.info("deleted %d positive masks", len(masks) - len(new_masks))
        meas = measure(problem, new_masks, state.vf, state.config.spec)
    state.masks = new_masks
    return meas, res, state.evals_used - before


def stage1(problem, state):
    """Volume-only optimization passes, lowering vf until max_ls holds."""
    state.stage = STAGE_I
    meas = None
    for _ in range(state.config.stage1_passes):
        if _remaining(state) < 2:
            break
        meas, res, used = _step(problem, state, with_ls=False)
        done = meas.gmax <= state.eps2
        pinned = state.vf <= state.config.vf_min
        action = STAGE1_DONE if done else (STAGE1_EXHAUSTED if pinned else REDUCE_VF)
        state.steps.append(StepRecord(STAGE_I, state.vf, state.eps1, meas.phi, meas.g1, meas.gmin, meas.gmax,
                                      used, res.status, action, len(state.masks)))
        log.info("stage I vf=%.4f phi=%.5g gmax=%.4g -> %s", state.vf, meas.phi, meas.gmax, action)
        if done:
            break
        if pinned:
            state.warnings.append("stage I: vf reached vf_min with g_max still above eps2")
            break
        state.vf = stage1_update(state, meas.gmax)
    else:
        if meas is not None:
            state.warnings.append("stage I: pass limit reached with g_max still above eps2")
    return meas


def stage2(problem, state):
    """Stage-II loop; returns the last measurement."""
    state.stage = STAGE_II
    meas = None
    while _remaining(state) >= 2:
        vf, eps = state.vf, state.eps1
        meas, res, used = _step(problem, state, with_ls=True)
        updated, action = stage2_step(state, meas.g1, meas.gmin, meas.gmax)
        state.steps.append(StepRecord(STAGE_II, vf, eps, meas.phi, meas.g1, meas.gmin, meas.gmax,
                                      used, res.status, action, len(state.masks)))
        log.info("stage II vf=%.4f eps=%g phi=%.5g g1=%.3g gmin=%.4g gmax=%.4g -> %s",
                 vf, eps, meas.phi, meas.g1, meas.gmin, meas.gmax, action)
        if action == ACCEPT:
            state.status = ACCEPTED
            return meas
        state.vf, state.eps1, state.eps2 = updated.vf, updated.eps1, updated.eps2
    state.status = BUDGET_EXHAUSTED
    return meas


def run(problem, config, on_step=None):
    """Stage I, Stage II and the optional continuation on alpha.

    Parameters
    ----------
    problem : TopologyProblem
    config : SLSConfig
    on_step : callable, optional
        Called with the state after every stage.

    Returns
    -------
    SLSState
        ``status`` is ``accepted`` or ``budget-exhausted``; ``final`` holds
        the last measured design.
    """
    state = SLSState(config=config, n_cells=problem.grid.n_cells, masks=problem.masks)
    meas = stage1(problem, state)
    if on_step:
        on_step(state)
    meas = stage2(problem, state) or meas
    if on_step:
        on_step(state)
    for alpha in config.continuation:
        if state.status != ACCEPTED:
            break
        state.masks = state.masks.with_alpha(alpha)
        state.status = None
        meas = stage2(problem, state) or meas
        if on_step:
            on_step(state)
    if meas is None:
        meas = measure(problem, state.masks, state.vf, config.spec)
        state.status = BUDGET_EXHAUSTED
    state.final = meas
    return state


def problem_from_config(cfg):
    """Build a :class:`TopologyProblem` and :class:`SLSConfig` from a RunConfig."""
    from . import config as cfgmod

    model = cfgmod.build_model(cfg)
    masks = cfgmod.initial_masks(cfg, model.grid)
    lower, upper = cfgmod.mask_axis_bounds(cfg)
    problem = TopologyProblem(model, masks, lower, upper, cfg.objective, cfg.scale)
    sls_cfg = SLSConfig(
        spec=cfgmod.lengthscale_spec(cfg),
        vf_init=cfg.vf_init,
        vf_min=cfg.vf_min,
        vf_max=cfg.vf_max,
        tol_init=cfg.tol,
        delta_eps=cfg.delta_eps,
        eps_int=cfg.eps_int,
        stage_budget=cfg.stage_budget,
        total_budget=cfg.total_budget,
        stage1_passes=cfg.stage1_passes,
        refresh_every=cfg.refresh_every,
        continuation=tuple(cfg.continuation),
        deletion_threshold=cfg.deletion_threshold,
    )
    return problem, sls_cfg
