import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lse.game_core import best_response_set
from lse.geometry import constraint_matrices
from lse.instances import (PathGameSpec, SchemaViolation, SmoothedSpec, SpecInvalid, UnknownFixture,
                           analytic_fixture, game_from_dict, game_to_dict, load_game,
                           lower_bound_game, random_smoothed_game, save_game, smoothed_perturb)


def test_smoothed_perturb_keeps_u1_and_is_seeded():
    base = np.full((3, 4), 0.5)
    u1 = np.arange(12.0).reshape(3, 4) / 12
    a = smoothed_perturb(SmoothedSpec(base, 0.05, seed=3, base_u1=u1))
    b = smoothed_perturb(SmoothedSpec(base, 0.05, seed=3, base_u1=u1))
    assert np.array_equal(a.u1, u1)
    assert np.array_equal(a.u2, b.u2)
    assert not np.array_equal(a.u2, base)
    zero = smoothed_perturb(SmoothedSpec(base, 0.0))
    assert np.array_equal(zero.u2, base)
    with pytest.raises(SpecInvalid):
        SmoothedSpec(base, -0.1)


def test_clipped_perturbation_stays_in_range():
    g = smoothed_perturb(SmoothedSpec(np.full((3, 3), 0.99), 0.5, seed=1, clip=True))
    assert g.u2.max() <= 1.0 and not g.extended_range


def test_unclipped_perturbation_is_flagged_extended():
    g = smoothed_perturb(SmoothedSpec(np.full((3, 3), 0.99), 0.5, seed=1))
    assert g.extended_range


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), sigma=st.floats(1e-3, 0.2))
def test_smoothed_columns_are_distinct(seed, sigma):
    g = random_smoothed_game(3, 3, sigma, seed)
    for b in range(3):
        for c in range(b + 1, 3):
            assert not np.array_equal(g.u2[:, b], g.u2[:, c])


def test_lower_bound_sizes_and_paper_value():
    pg = lower_bound_game(PathGameSpec(2, seed=0))
    g = pg.game
    assert g.m == 4 and g.n == 4 * 3 * 2 + 1
    assert g.extended_range
    assert pg.path[0] == 0 and len(set(pg.path)) == 2
    # u1(v_1, action 0) = 1/(2*ell + 1) = 1/5
    assert g.u1[pg.path[0], 0] == pytest.approx(1 / 5)
    assert np.all(g.u2[:, 0] == 0)


def test_lower_bound_utility_tables():
    pg = lower_bound_game(PathGameSpec(3, path=(0, 4, 2), n_principal=5))
    g = pg.game
    for i in (1, 2):
        a = pg.edge_action(i)
        r, s = pg.path[i - 1], pg.path[i]
        assert pg.actions[a] == (r, s, i)
        col = g.u2[:, a]
        assert col[r] == col[s] == pytest.approx(1 / 9)
        assert np.all(np.delete(col, [r, s]) == -1)
        assert g.u1[s, a] == pytest.approx((1 + 2 * i) / 7)
        assert np.all(np.delete(g.u1[:, a], s) == pytest.approx(2 * i / 7))
    off = pg.action_index(1, 3, 2)
    assert np.all(g.u2[:, off] == -1)
    assert g.u1[3, off] == pytest.approx(5 / 7)


@pytest.mark.parametrize("path", [(1, 2), (0, 0), (0, 9), (0, 1, 2)])
def test_lower_bound_rejects_bad_paths(path):
    with pytest.raises(SpecInvalid):
        lower_bound_game(PathGameSpec(2, path=path, n_principal=4))


def test_lower_bound_rejects_short_path():
    with pytest.raises(SpecInvalid):
        lower_bound_game(PathGameSpec(1))


def test_edge_region_threshold_is_nine_tenths():
    # on-path column scores (1/9) S - (1 - S) with S = x_r + x_s, which is >= 0 iff S >= 9/10
    S = Fraction(9, 10)
    assert Fraction(1, 9) * S - (1 - S) == 0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), i=st.integers(1, 2))
def test_edge_action_responds_inside_its_region(seed, i):
    pg = lower_bound_game(PathGameSpec(3, n_principal=5, seed=seed % 7))
    g = pg.game
    rng = np.random.default_rng(seed)
    r, s = pg.path[i - 1], pg.path[i]
    x = rng.dirichlet(np.ones(5)) * 0.1
    w = rng.uniform(0, 1)
    x[r] += 0.9 * w
    x[s] += 0.9 * (1 - w)
    scores = x @ g.u2
    a = pg.edge_action(i)
    others = [pg.edge_action(j) for j in (1, 2) if j != i]
    assert scores[a] >= scores[0] - 1e-12
    off_path = [b for b in range(1, g.n) if b not in (a, *others)]
    assert np.all(scores[a] >= scores[off_path] - 1e-12)
    if all(scores[o] < 0 for o in others):
        assert a in best_response_set(g, x)


def test_edge_regions_are_the_only_nondefault_polytopes():
    pg = lower_bound_game(PathGameSpec(2, n_principal=4, seed=1))
    g = pg.game
    x = np.array([0.5, 0.5, 0.0, 0.0])
    x[list(pg.path)] = [0.45, 0.5]
    x[[k for k in range(4) if k not in pg.path]] = 0.025
    assert best_response_set(g, x).actions == (pg.edge_action(1),)
    H = constraint_matrices(g, pg.edge_action(1)).H
    assert np.all(H @ x >= 0)


def test_fixtures():
    assert analytic_fixture("crossing_2x2").m == 2
    assert analytic_fixture("dominant").n == 3
    tri = analytic_fixture("tripoint_3")
    assert np.allclose(tri.u2.sum(axis=0), tri.u2.sum(axis=0)[0])
    with pytest.raises(UnknownFixture):
        analytic_fixture("nope")


def test_json_round_trip(tmp_path):
    g = random_smoothed_game(3, 4, 0.05, 11)
    path = tmp_path / "g.json"
    save_game(g, path)
    h = load_game(path)
    assert np.array_equal(g.u1, h.u1) and np.array_equal(g.u2, h.u2)
    assert h.extended_range == g.extended_range
    assert h.meta["generator"] == "smoothed"
    pg = lower_bound_game(PathGameSpec(2, seed=3))
    assert np.array_equal(game_from_dict(json.loads(json.dumps(game_to_dict(pg.game)))).u2,
                          pg.game.u2)


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("u1"),
    lambda d: d.update(m=3),
    lambda d: d["u2"][0].append(0.5),
    lambda d: d["u2"][0].__setitem__(0, "x"),
    lambda d: d["u2"][0].__setitem__(0, 1.5),
    lambda d: d.update(extended_range="yes"),
])
def test_schema_violations(mutate):
    d = game_to_dict(analytic_fixture("crossing_2x2"))
    mutate(d)
    with pytest.raises(SchemaViolation):
        game_from_dict(d)


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(SchemaViolation):
        load_game(p)
