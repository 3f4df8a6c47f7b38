import numpy as np
import pytest

from stommelbox import _kernels, core, defaults
from stommelbox.core import MONTH_SECONDS, OceanState

try:
    COMPILED = _kernels.get_impl("compiled")
except ImportError:
    COMPILED = None

needs_compiled = pytest.mark.skipif(COMPILED is None, reason="compiled kernel not built")


def _ensemble(rng, M=32):
    base = defaults.initial_state().as_array()
    states = base[None, :] + rng.normal(0.0, [0.5, 0.3, 0.07, 0.07], (M, 4))
    p = defaults.params()
    kT = p.kT * np.exp(rng.normal(0, 0.26, M))
    kS = p.kS * np.exp(rng.normal(0, 0.26, M))
    gm = p.gamma * np.exp(rng.normal(0, 0.26, M))
    return states, kT, kS, gm


def _args(scenario_on=True):
    scen = defaults.scenario(enabled=scenario_on, warm_e=0.07, warm_p=0.14, melt_period_yr=1000.0)
    return core._kernel_args(defaults.context(scenario_override=scen))


@needs_compiled
def test_backends_agree_bitwise(rng):
    states, kT, kS, gm = _ensemble(rng)
    args = _args()
    ref = _kernels.propagate_ensemble(
        states, kT, kS, gm, 0.0, MONTH_SECONDS, 600, args, impl=_kernels.get_impl("reference")
    )
    fast = _kernels.propagate_ensemble(
        states, kT, kS, gm, 0.0, MONTH_SECONDS, 600, args, impl=COMPILED
    )
    assert np.array_equal(ref, fast)


def test_single_member_matches_step_rk4(ctx, rng):
    state = OceanState(6.0, 1.1, 35.2, 34.7)
    p = ctx.params
    out = core.propagate_ensemble(
        state.as_array()[None, :],
        np.array([p.kT]), np.array([p.kS]), np.array([p.gamma]),
        0.0, MONTH_SECONDS, 12, ctx,
    )
    s = state
    for k in range(12):
        s = core.step_rk4(s, k * MONTH_SECONDS, MONTH_SECONDS, ctx)
    assert np.array_equal(out[-1, 0], s.as_array())


def test_integrate_equals_manual_steps(ctx):
    state = defaults.initial_state()
    t1 = 3.0 * MONTH_SECONDS
    traj = core.integrate(state, 0.0, t1, MONTH_SECONDS, ctx)
    s = state
    for k in range(3):
        s = core.step_rk4(s, k * MONTH_SECONDS, MONTH_SECONDS, ctx)
    assert np.array_equal(traj.states[-1], s.as_array())


def test_zero_steps_returns_copy(rng):
    states, kT, kS, gm = _ensemble(rng, 4)
    out = _kernels.propagate_ensemble(states, kT, kS, gm, 0.0, 1.0, 0, _args())
    assert out.shape == (1, 4, 4)
    assert np.array_equal(out[0], states)
    out[0, 0, 0] = -1
    assert states[0, 0] != -1


def test_shape_validation(rng):
    states, kT, kS, gm = _ensemble(rng, 4)
    with pytest.raises(ValueError):
        _kernels.propagate_ensemble(states[:, :3], kT, kS, gm, 0.0, 1.0, 1, _args())
    with pytest.raises(ValueError):
        _kernels.propagate_ensemble(states, kT[:2], kS, gm, 0.0, 1.0, 1, _args())
    with pytest.raises(ValueError):
        _kernels.propagate_ensemble(states, kT, kS, gm, 0.0, -1.0, 1, _args())


def test_backend_selection_reports_name():
    assert _kernels.backend() in ("compiled", "reference")
    assert _kernels.get_impl("reference") is not None
    with pytest.raises(ValueError):
        _kernels.get_impl("nope")


@needs_compiled
def test_scenario_branch_agrees_across_onset(rng):
    # steps straddling the forcing onset hit both branches of the target code
    states, kT, kS, gm = _ensemble(rng, 8)
    args = _args(scenario_on=True)
    t0 = args.scenario.onset_t - 2.5 * MONTH_SECONDS
    ref = _kernels.propagate_ensemble(
        states, kT, kS, gm, t0, MONTH_SECONDS, 6, args, impl=_kernels.get_impl("reference")
    )
    fast = _kernels.propagate_ensemble(
        states, kT, kS, gm, t0, MONTH_SECONDS, 6, args, impl=COMPILED
    )
    assert np.array_equal(ref, fast)
