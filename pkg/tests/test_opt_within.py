import math

import numpy as np
import pytest

from lse.instances import analytic_fixture, random_smoothed_game
from lse.interaction import br_oracle, new_session, play_repeated
from lse.opt_within import closeness_slack, optimize_within_polytope
from lse.verify import enumerate_polytopes

ALPHA = 0.5 * 1e-2 / 27


def test_closeness_slack_formula():
    want = 2 * 1e-4 * 3 / (1e-2 - 1e-4 * math.sqrt(3)) + 2 * 0.02 / 0.1
    assert closeness_slack(1e-4, 3, 1e-2, 0.02, r_min=0.1) == pytest.approx(want)
    assert closeness_slack(1e-4, 3, 1e-2, 0.02) == math.inf
    assert closeness_slack(1.0, 4, 1e-2, 0.02, r_min=0.1) == math.inf


def test_region_floor_must_exceed_played_floor():
    g = analytic_fixture("dominant")
    s = new_session(g, "fp", gamma=0.01)
    play_repeated(s, np.ones(3) / 3, 1)
    with pytest.raises(ValueError):
        optimize_within_polytope(s, 0, s.avg.copy(), 0.1, 0.1, ALPHA, 0.01)
    with pytest.raises(ValueError):
        optimize_within_polytope(s, 0, s.avg.copy(), 0.1, 0.1, 0.0, 0.02)


def test_single_polytope_reaches_floored_optimum():
    g = analytic_fixture("dominant")
    s = new_session(g, "fp", gamma=0.01)
    play_repeated(s, np.ones(3) / 3, 1)
    x, state = optimize_within_polytope(s, 0, s.avg.copy(), 0.1, 0.1, ALPHA, 0.02)
    # u1[:, 0] = (1, 0, 0): floored optimum puts 0.96 on the first action
    assert x @ g.u1[:, 0] >= 0.96 - 0.01
    assert state.events == 0 and not state.empty and not state.stalled
    assert state.min_scaled_gain() >= 0.01 - 1e-12


def test_crossing_fixture_learns_boundary():
    g = analytic_fixture("crossing_2x2")
    s = new_session(g, "fp", gamma=0.01)
    play_repeated(s, [0.8, 0.2], 1)
    b = br_oracle(s)
    assert b == 0
    x, state = optimize_within_polytope(s, b, s.avg.copy(), 0.1, 0.1, ALPHA, 0.02)
    assert state.events == 1 and state.estimated.labels == (1,)
    # true optimum of P_0 is 4/7 at x0 = 3/7; estimate is alpha inside
    assert x @ g.u1[:, 0] == pytest.approx(4 / 7, abs=0.01 + 4 * ALPHA)
    assert x @ g.u1[:, 0] <= 4 / 7 + 1e-9
    ts, before, after = state.improvement_steps()
    assert np.all(ts * (after - before) >= 0.01 - 1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_gap_to_true_polytope_optimum_within_slack(seed):
    g = random_smoothed_game(3, 3, 0.05, seed)
    cat = enumerate_polytopes(g)
    s = new_session(g, "fp", seed=seed, gamma=0.01)
    play_repeated(s, np.ones(3) / 3, 1)
    b = br_oracle(s)
    x, state = optimize_within_polytope(s, b, s.avg.copy(), 0.1, 0.05, ALPHA, 0.02,
                                        r_min=cat.r_min)
    gap = cat[b].value - float(x @ g.u1[:, b])
    assert gap <= 0.1 * 0.05 + state.slack
    assert np.all(cat[b].constraints @ x >= -1e-9)
