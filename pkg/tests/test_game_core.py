import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lse.game_core import (GameInstance, InvalidArgument, best_response_set, expected_utility,
                           lowest_best_response, mixed_strategy)

from conftest import games


def brute_force_best_responses(u2, x, tol):
    # plain loops, no numpy reductions
    m, n = len(u2), len(u2[0])
    scores = [sum(x[a] * u2[a][b] for a in range(m)) for b in range(n)]
    top = max(scores)
    return tuple(b for b in range(n) if scores[b] >= top - tol)


def test_mixed_strategy_renormalizes_tiny_drift():
    x = mixed_strategy([0.5, 0.5 + 5e-10])
    assert x.sum() == pytest.approx(1.0, abs=1e-15)
    assert not x.flags.writeable


@pytest.mark.parametrize("bad", [[0.6, 0.6], [-0.1, 1.1], [np.nan, 1.0], []])
def test_mixed_strategy_rejects(bad):
    with pytest.raises(InvalidArgument):
        mixed_strategy(bad)


def test_game_validation():
    with pytest.raises(InvalidArgument):
        GameInstance([[0.1, 0.2]], [[0.1, 0.2]])
    with pytest.raises(InvalidArgument):
        GameInstance([[0.1, 0.2], [0.3, 0.4]], [[0.1, 0.2, 0.3], [0.3, 0.4, 0.5]])
    with pytest.raises(InvalidArgument):
        GameInstance([[0.1, -1.0], [0.3, 0.4]], [[0.1, 0.2], [0.3, 0.4]])
    g = GameInstance([[0.1, -1.0], [0.3, 0.4]], [[0.1, 0.2], [0.3, 2.0]], extended_range=True)
    assert g.utility_range == (-1.0, 2.0)
    with pytest.raises(InvalidArgument):
        GameInstance([[0.1, np.inf], [0.3, 0.4]], [[0.1, 0.2], [0.3, 0.4]], extended_range=True)


def test_matrices_are_frozen():
    g = GameInstance([[0.1, 0.2], [0.3, 0.4]], [[0.1, 0.2], [0.3, 0.4]])
    with pytest.raises(ValueError):
        g.u1[0, 0] = 1.0


def test_expected_utility_matches_double_sum():
    g = GameInstance([[0.1, 0.7], [0.9, 0.4]], [[0.2, 0.8], [0.6, 0.3]])
    x, y = [0.25, 0.75], [0.4, 0.6]
    by_hand = sum(x[a] * y[b] * g.u1[a, b] for a in range(2) for b in range(2))
    assert expected_utility(g, x, y) == pytest.approx(by_hand, abs=1e-15)
    assert expected_utility(g, x, 1, player="agent") == pytest.approx(0.25 * 0.8 + 0.75 * 0.3)
    with pytest.raises(InvalidArgument):
        expected_utility(g, x, 2)
    with pytest.raises(InvalidArgument):
        expected_utility(g, x, 0, player="nature")


def test_ties_are_all_reported():
    g = GameInstance([[0, 0, 0], [0, 0, 0]], [[0.5, 0.5, 0.1], [0.5, 0.5, 0.2]])
    br = best_response_set(g, [0.5, 0.5])
    assert br.actions == (0, 1)
    assert br.lowest == 0
    assert br.margin == pytest.approx(0.35)
    assert 1 in br


@settings(max_examples=200, deadline=None)
@given(game=games(max_m=6, max_n=6), seed=st.integers(0, 2**32 - 1))
def test_best_response_set_matches_brute_force(game, seed):
    x = np.random.default_rng(seed).dirichlet(np.ones(game.m))
    want = brute_force_best_responses(game.u2.tolist(), x.tolist(), 1e-9)
    assert best_response_set(game, x).actions == want
    assert lowest_best_response(game, x) == want[0]
