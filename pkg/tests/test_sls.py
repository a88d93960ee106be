"""Two-stage driver: update rules, mask deletion and small end-to-end runs."""

import dataclasses

import numpy as np
import pytest

from hexmask import config, fem, maskfield, sls
from hexmask.hexgrid import build_grid
from hexmask.lengthscale import LengthScaleSpec

from helpers import TINY_CONFIG

SPEC = LengthScaleSpec(2.0, 4.0)


def _state(n_cells=12000, **kw):
    cfg = sls.SLSConfig(spec=SPEC, **{k: kw.pop(k) for k in list(kw) if k in sls.SLSConfig.__dataclass_fields__})
    return sls.SLSState(config=cfg, n_cells=n_cells, masks=None, **kw)


# ------------------------------------------------------------ configuration


def test_config_defaults_eps_int_to_tol_init():
    cfg = sls.SLSConfig(spec=SPEC, tol_init=2.5)
    assert cfg.eps_int == 2.5


@pytest.mark.parametrize(
    "kw",
    [
        {"vf_min": 0.3, "vf_init": 0.2},
        {"vf_init": 0.6},
        {"delta_eps": 0.0},
        {"tol_init": -1.0},
        {"stage_budget": 1},
        {"total_budget": 1},
    ],
)
def test_config_rejects_inconsistent_values(kw):
    with pytest.raises(ValueError):
        sls.SLSConfig(spec=SPEC, **kw)


# ------------------------------------------------------------ update rules


def test_stage1_update_subtracts_gmax_over_n():
    st = _state(vf=0.2)
    assert sls.stage1_update(st, 120.0) == pytest.approx(0.19, abs=1e-15)


def test_stage1_update_floors_at_vf_min():
    st = _state(vf=0.11)
    assert sls.stage1_update(st, 1e6) == 0.1


def test_rule_a_accepts_and_leaves_state_alone():
    st = _state(vf=0.3, eps1=1.0, eps2=1.0)
    new, action = sls.stage2_step(st, -2.0, 0.5, 0.3)
    assert action == sls.ACCEPT
    assert (new.vf, new.eps1, new.eps2) == (0.3, 1.0, 1.0)


def test_rule_a_boundary_is_inclusive():
    st = _state(vf=0.3, eps1=1.0, eps2=1.0)
    assert sls.stage2_step(st, 0.0, 1.0, 1.0)[1] == sls.ACCEPT


def test_rule_b_adds_material_and_raises_eps():
    st = _state(vf=0.28, eps1=1.0, eps2=1.0)
    new, action = sls.stage2_step(st, -1.0, 33.3, 0.5)
    assert action == sls.MORE_MATERIAL
    assert new.vf == pytest.approx(0.282775, abs=1e-12)
    assert (new.eps1, new.eps2) == (2.0, 2.0)


def test_rule_c_removes_material_and_raises_eps():
    st = _state(vf=0.3, eps1=1.0, eps2=1.0)
    new, action = sls.stage2_step(st, -1.0, 0.5, 60.0)
    assert action == sls.LESS_MATERIAL
    assert new.vf == pytest.approx(0.3 - 60.0 / 12000, abs=1e-12)
    assert (new.eps1, new.eps2) == (2.0, 2.0)


def test_rule_d_relaxes_without_touching_vf():
    st = _state(vf=0.3, eps1=10.0, eps2=10.0)
    new, action = sls.stage2_step(st, -1.0, 50.0, 40.0)
    assert action == sls.RELAX
    assert new.vf == 0.3
    assert (new.eps1, new.eps2) == (20.0, 20.0)


def test_volume_violation_takes_precedence_and_clamps():
    st = _state(vf=0.4995, eps1=1.0, eps2=1.0)
    new, action = sls.stage2_step(st, 30.0, 0.0, 0.0)
    assert action == sls.RAISE_VOLUME
    assert new.vf == 0.5
    assert (new.eps1, new.eps2) == (1.0, 1.0)


def test_small_volume_violation_still_moves_vf():
    st = _state(vf=0.3)
    new, _ = sls.stage2_step(st, 1e-9, 0.0, 0.0)
    assert new.vf == pytest.approx(0.3 + 1.0 / 12000)


def test_stage2_step_does_not_mutate_input():
    st = _state(vf=0.3, eps1=1.0, eps2=1.0)
    sls.stage2_step(st, -1.0, 50.0, 40.0)
    assert (st.vf, st.eps1, st.eps2) == (0.3, 1.0, 1.0)


@pytest.mark.parametrize("seed", range(5))
def test_eps_values_move_in_lockstep(seed):
    rng = np.random.default_rng(seed)
    st = _state(vf=0.3, eps1=1.0, eps2=1.0, delta_eps=7.0, tol_init=1.0)
    for _ in range(30):
        g1, gmin, gmax = rng.normal(-1, 1), rng.uniform(0, 30), rng.uniform(0, 30)
        before = st.eps1
        st, action = sls.stage2_step(st, g1, gmin, gmax)
        assert st.eps1 == st.eps2
        assert st.eps1 >= before
        assert 0.1 <= st.vf <= 0.5


# ------------------------------------------------------------ mask deletion


@pytest.fixture(scope="module")
def clamped_cantilever():
    g = build_grid(24, 12, 1.0)
    xmin, ymin, xmax, ymax = g.bounds
    f = np.zeros(2 * g.n_nodes)
    f[2 * g.nearest_node(xmax, ymin) + 1] = -1.0
    # every node of a wide strip is clamped, so cells there carry no energy
    fixed = fem.node_dofs(g.nodes_in_box(xmin, ymin, xmin + 4.5, ymax), "xy")
    model = fem.FEModel(g, fixed, f)
    bar = [(xmin + xmax) / 2, ymin + 1.5, 14.0, 2.5, 0.0]
    island = [xmin + 2.2, (ymin + ymax) / 2 + 3, 1.2, 1.2, 0.0]
    return model, bar, island


def _delete(model, params, polarity=maskfield.POSITIVE, threshold=1e-6):
    masks = maskfield.MaskSet(np.array(params, dtype=float), polarity=polarity)
    prob = sls.TopologyProblem(model, masks, 0.01, 20.0)
    fld = maskfield.evaluate_field(model.grid, masks, model.rho_min)
    res = fem.assemble_solve(model, fld)
    return masks, sls.mask_deletion(prob, masks, fld, res, threshold)


def test_deletion_drops_island_in_zero_energy_region(clamped_cantilever):
    model, bar, island = clamped_cantilever
    before, after = _delete(model, [bar, island])
    assert len(after) == 1
    np.testing.assert_array_equal(after.params[0], before.params[0])


def test_deletion_keeps_load_path(clamped_cantilever):
    model, bar, _ = clamped_cantilever
    moved = [bar[0], bar[1] + 4.0, 3.0, 3.0, 0.0]
    _, after = _delete(model, [bar, moved])
    assert len(after) == 2


def test_deletion_never_removes_last_mask(clamped_cantilever):
    model, _, island = clamped_cantilever
    _, after = _delete(model, [island])
    assert len(after) == 1


def test_deletion_ignores_negative_masks(clamped_cantilever):
    model, bar, island = clamped_cantilever
    _, after = _delete(model, [bar, island], polarity=maskfield.NEGATIVE)
    assert len(after) == 2


def test_floating_island_keeps_energy_above_default_threshold(clamped_cantilever):
    """Soft void still strains a free island, so only a looser threshold drops it."""
    model, bar, _ = clamped_cantilever
    xmin, ymin, xmax, ymax = model.grid.bounds
    floating = [xmin + 0.75 * (xmax - xmin), ymin + 0.8 * (ymax - ymin), 1.2, 1.2, 0.0]
    assert len(_delete(model, [bar, floating])[1]) == 2
    assert len(_delete(model, [bar, floating], threshold=1e-3)[1]) == 1


# ------------------------------------------------------------ end-to-end


@pytest.fixture(scope="module")
def tiny():
    cfg = config.parse_config(TINY_CONFIG)
    problem, sls_cfg = sls.problem_from_config(cfg)
    return problem, sls_cfg


@pytest.fixture(scope="module")
def tiny_run(tiny):
    problem, sls_cfg = tiny
    return sls.run(problem, sls_cfg)


def test_tiny_run_is_accepted_with_constraints_met(tiny_run):
    st = tiny_run
    assert st.status == sls.ACCEPTED
    m = st.final
    assert m.g1 <= 0
    assert m.gmin <= st.eps1
    assert m.gmax <= st.eps2
    assert st.steps[-1].action == sls.ACCEPT


def test_tiny_run_history_matches_evaluations(tiny_run, tiny):
    st = tiny_run
    assert len(st.history) == st.evals_used <= tiny[1].total_budget
    assert [r.eval for r in st.history] == list(range(1, st.evals_used + 1))
    assert sum(s.evals for s in st.steps) <= st.evals_used


def test_tiny_run_eps_and_vf_stay_in_range(tiny_run):
    st = tiny_run
    eps = [r.eps1 for r in st.history]
    assert all(b >= a for a, b in zip(eps, eps[1:]))
    assert all(r.eps1 == r.eps2 for r in st.history)
    assert all(0.1 <= r.vf <= 0.5 for r in st.history)


def test_tiny_run_stage_one_precedes_stage_two(tiny_run):
    stages = [s.stage for s in tiny_run.steps]
    assert stages[0] == sls.STAGE_I
    assert stages == sorted(stages, key=lambda s: s != sls.STAGE_I)


def test_tiny_run_is_deterministic(tiny, tiny_run):
    problem, sls_cfg = tiny
    again = sls.run(problem, sls_cfg)
    assert [r.as_tuple() for r in again.history] == [r.as_tuple() for r in tiny_run.history]
    np.testing.assert_array_equal(again.masks.params, tiny_run.masks.params)


def test_on_step_callback_sees_each_stage(tiny):
    problem, sls_cfg = tiny
    seen = []
    sls.run(problem, dataclasses.replace(sls_cfg, total_budget=60), on_step=lambda s: seen.append(s.stage))
    assert seen == [sls.STAGE_I, sls.STAGE_II]


def test_small_budget_exhausts_and_reports_final_design(tiny):
    problem, sls_cfg = tiny
    st = sls.run(problem, dataclasses.replace(sls_cfg, total_budget=25))
    assert st.status == sls.BUDGET_EXHAUSTED
    assert st.evals_used <= 25
    assert st.final is not None
    assert np.isfinite(st.final.phi)


def test_continuation_sharpens_masks(tiny):
    problem, sls_cfg = tiny
    st = sls.run(problem, dataclasses.replace(sls_cfg, continuation=(12.0,), total_budget=2500))
    assert st.status == sls.ACCEPTED
    assert st.masks.alpha == 12.0
    assert problem.masks.alpha == 6.0
    assert st.steps[-1].action == sls.ACCEPT


def test_positive_masks_get_deleted_during_run():
    cfg = config.benchmark_config("IV", 0.4)
    cfg = dataclasses.replace(cfg, polarity=maskfield.POSITIVE, total_budget=60)
    problem, sls_cfg = sls.problem_from_config(cfg)
    st = sls.run(problem, sls_cfg)
    counts = [s.n_masks for s in st.steps]
    assert counts == sorted(counts, reverse=True)
    assert len(st.masks) < len(problem.masks)
    assert len(st.masks) >= 1


def test_refresh_cadence_is_honoured(tiny):
    problem, sls_cfg = tiny
    short = dataclasses.replace(sls_cfg, total_budget=60)
    a = sls.run(problem, short)
    b = sls.run(problem, dataclasses.replace(short, refresh_every=5))
    assert a.evals_used <= 60 and b.evals_used <= 60
    assert [r.as_tuple() for r in a.history] != [r.as_tuple() for r in b.history]
    with pytest.raises(ValueError):
        dataclasses.replace(short, refresh_every=1)
