"""Ground-truth checks that read the agent's utilities directly.

Every LP here goes through scipy's HiGHS solver, so these checks are
independent of the hand-written simplex the algorithm itself uses.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .game_core import best_response_set
from .geometry import DimensionTooLarge, constraint_matrices

MAX_M = 16
MAX_N = 256
CERT_SLACK = 1e-9
DEFAULT_BUDGET = 200_000


class EmptyRegion(ValueError):
    pass


def _check_caps(game):
    if game.m > MAX_M or game.n > MAX_N:
        raise DimensionTooLarge(f"{game.m}x{game.n} exceeds the {MAX_M}x{MAX_N} verification cap")


def _solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(0, None)):
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 2:
        return None
    if res.status != 0:
        raise ArithmeticError(f"LP solver failed: {res.message}")
    return res


@dataclass
class PolytopeInfo:
    action: int
    nonempty: bool
    constraints: np.ndarray
    value: float = None
    argmax: np.ndarray = None
    witness: np.ndarray = None
    witness_floor: float = None
    interior_margin: float = None


@dataclass
class PolytopeCatalog:
    polytopes: list = field(default_factory=list)

    @property
    def nonempty_actions(self):
        return [p.action for p in self.polytopes if p.nonempty]

    @property
    def full_dimensional_actions(self):
        return [p.action for p in self.polytopes if p.nonempty and p.interior_margin > 1e-9]

    @property
    def r_min(self):
        floors = [p.witness_floor for p in self.polytopes if p.nonempty]
        return min(floors) if floors else None

    def __getitem__(self, b):
        return self.polytopes[b]


def _polytope_lp(H, objective, m, floor=0.0):
    """max objective.x over {H x >= 0, sum x = 1, x >= floor}."""
    return _solve(-np.asarray(objective, dtype=float), A_ub=-H, b_ub=np.zeros(H.shape[0]),
                  A_eq=np.ones((1, m)), b_eq=[1.0], bounds=[(floor, None)] * m)


def _max_min_coordinate(H, m):
    # variables (x, s): max s with x >= s, H x >= 0
    A = np.vstack([np.hstack([-H, np.zeros((H.shape[0], 1))]),
                   np.hstack([-np.eye(m), np.ones((m, 1))])])
    c = np.zeros(m + 1)
    c[-1] = -1.0
    res = _solve(c, A_ub=A, b_ub=np.zeros(A.shape[0]),
                 A_eq=np.append(np.ones(m), 0.0).reshape(1, -1), b_eq=[1.0],
                 bounds=[(0, None)] * m + [(None, None)])
    return res.x[:m], float(res.x[-1])


def _interior_margin(H, m):
    # largest r with every normalized boundary and coordinate at least r away
    norms = np.linalg.norm(H, axis=1)
    norms[norms == 0] = 1.0
    A = np.vstack([np.hstack([-H, norms.reshape(-1, 1)]),
                   np.hstack([-np.eye(m), np.ones((m, 1))])])
    c = np.zeros(m + 1)
    c[-1] = -1.0
    res = _solve(c, A_ub=A, b_ub=np.zeros(A.shape[0]),
                 A_eq=np.append(np.ones(m), 0.0).reshape(1, -1), b_eq=[1.0],
                 bounds=[(0, None)] * m + [(None, 1.0)])
    return float(res.x[-1])


def enumerate_polytopes(game):
    _check_caps(game)
    m = game.m
    catalog = PolytopeCatalog()
    for b in range(game.n):
        H = constraint_matrices(game, b).H
        res = _polytope_lp(H, game.u1[:, b], m)
        if res is None:
            catalog.polytopes.append(PolytopeInfo(b, False, H))
            continue
        witness, floor = _max_min_coordinate(H, m)
        catalog.polytopes.append(PolytopeInfo(
            b, True, H, float(-res.fun), res.x, witness, floor, _interior_margin(H, m)))
    return catalog


def _lex_refine(H, objective, value, m, tol=1e-9):
    """Lexicographically smallest maximizer, one coordinate at a time."""
    A_ub = [-H, -np.asarray(objective, dtype=float).reshape(1, -1)]
    b_ub = [np.zeros(H.shape[0]), [-(value - tol)]]
    x = None
    for j in range(m):
        c = np.zeros(m)
        c[j] = 1.0
        res = _solve(c, A_ub=np.vstack(A_ub), b_ub=np.concatenate(b_ub),
                     A_eq=np.ones((1, m)), b_eq=[1.0], bounds=[(0, None)] * m)
        if res is None:
            break
        x = res.x
        row = np.zeros((1, m))
        row[0, j] = 1.0
        A_ub.append(row)
        b_ub.append([x[j] + tol])
    return x


def exact_stackelberg(game, catalog=None):
    """(value, x, b): best per-polytope optimum, ties to the lowest b."""
    catalog = catalog or enumerate_polytopes(game)
    best = None
    for p in catalog.polytopes:
        if p.nonempty and (best is None or p.value > best.value + 1e-12):
            best = p
    x = _lex_refine(best.constraints, game.u1[:, best.action], best.value, game.m)
    return best.value, (best.argmax if x is None else x), best.action


@dataclass
class Certificate:
    certified: bool
    base: float
    threshold: float
    values: dict
    witness: tuple = None

    def __bool__(self):
        return self.certified


def local_optimum(game, b, x, delta):
    """max U1(x', b) over x' in P_b within l1 distance delta of x; None if empty."""
    m = game.m
    x = np.asarray(x, dtype=float)
    H = constraint_matrices(game, b).H
    k = H.shape[0]
    eye = np.eye(m)
    zero_mk = np.zeros((k, m))
    # variables (x', d): H x' >= 0, d >= |x' - x|, sum d <= delta
    A_ub = np.vstack([
        np.hstack([-H, zero_mk]),
        np.hstack([eye, -eye]),
        np.hstack([-eye, -eye]),
        np.hstack([np.zeros(m), np.ones(m)]).reshape(1, -1),
    ])
    b_ub = np.concatenate([np.zeros(k), x, -x, [delta]])
    c = np.concatenate([-game.u1[:, b], np.zeros(m)])
    A_eq = np.hstack([np.ones(m), np.zeros(m)]).reshape(1, -1)
    res = _solve(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=[(0, None)] * (2 * m))
    if res is None:
        return None
    return float(-res.fun), res.x[:m]


def certify_lse(game, x, eps, delta, slack=CERT_SLACK):
    """Exact (eps, delta)-local Stackelberg check over the l1 ball around x."""
    _check_caps(game)
    x = np.asarray(x, dtype=float)
    br = best_response_set(game, x)
    base = max(float(x @ game.u1[:, y]) for y in br.actions)
    threshold = base + eps * delta + slack
    values = {}
    worst = None
    for b in range(game.n):
        out = local_optimum(game, b, x, delta)
        if out is None:
            continue
        value, point = out
        values[b] = value
        if value > threshold and (worst is None or value > worst[2]):
            worst = (b, point, value)
    return Certificate(worst is None, base, threshold, values, worst)


@dataclass
class SingularReport:
    min_value: float
    exhaustive: bool
    checked: int
    sigma_lb: float

    @property
    def satisfied(self):
        return self.min_value >= self.sigma_lb


def _augmented(game, b):
    H = constraint_matrices(game, b).H
    return np.vstack([H, np.ones((1, game.m)), np.eye(game.m)])


def check_singular_assumption(game, sigma_lb, budget=DEFAULT_BUDGET, seed=0):
    """Smallest singular value over m x m row-subsets of every augmented constraint matrix."""
    m, n = game.m, game.n
    rows = n + m  # (n-1) boundaries + all-ones + identity
    per_action = math.comb(rows, m)
    mats = [_augmented(game, b) for b in range(n)]
    best = math.inf
    if n * per_action <= budget:
        subsets = np.array(list(itertools.combinations(range(rows), m)))
        for G in mats:
            s = np.linalg.svd(G[subsets], compute_uv=False)
            best = min(best, float(s[:, -1].min()))
        return SingularReport(best, True, n * per_action, sigma_lb)
    rng = np.random.default_rng(seed)
    checked = 0
    chunk = 4096
    while checked < budget:
        size = min(chunk, budget - checked)
        which = rng.integers(n, size=size)
        subsets = np.argsort(rng.random((size, rows)), axis=1)[:, :m]
        stack = np.stack([mats[b] for b in which])
        picked = np.take_along_axis(stack, subsets[:, :, None], axis=1)
        s = np.linalg.svd(picked, compute_uv=False)
        best = min(best, float(s[:, -1].min()))
        checked += size
    return SingularReport(best, False, checked, sigma_lb)


def _region_arrays(region):
    return (np.asarray(region.normals, dtype=float).reshape(-1, region.m),
            np.asarray(region.margins, dtype=float), float(region.floor))


def _region_lp(region, objective):
    N, c, floor = _region_arrays(region)
    m = region.m
    return _solve(-np.asarray(objective, dtype=float),
                  A_ub=-N if N.size else None, b_ub=-c if N.size else None,
                  A_eq=np.ones((1, m)), b_eq=[1.0], bounds=[(floor, None)] * m)


def l1_distance_to_region(p, region):
    N, c, floor = _region_arrays(region)
    m = region.m
    eye = np.eye(m)
    blocks = [np.hstack([eye, -eye]), np.hstack([-eye, -eye])]
    rhs = [p, -p]
    if N.size:
        blocks.insert(0, np.hstack([-N, np.zeros((N.shape[0], m))]))
        rhs.insert(0, -c)
    res = _solve(np.concatenate([np.zeros(m), np.ones(m)]), A_ub=np.vstack(blocks),
                 b_ub=np.concatenate(rhs), A_eq=np.hstack([np.ones(m), np.zeros(m)]).reshape(1, -1),
                 b_eq=[1.0], bounds=[(floor, None)] * m + [(0, None)] * m)
    if res is None:
        raise EmptyRegion("estimated region is empty")
    return float(res.fun)


def hausdorff_gap(true_region, est_region, samples=64, seed=0):
    """One-sided l1 gap: max over sampled points of true_region of the distance to est_region.

    Points are vertices reached by random objectives plus random mixtures of
    them; the exact maximum sits at a vertex.
    """
    m = true_region.m
    rng = np.random.default_rng(seed)
    if _region_lp(true_region, np.zeros(m)) is None:
        raise EmptyRegion("true region is empty")
    if _region_lp(est_region, np.zeros(m)) is None:
        raise EmptyRegion("estimated region is empty")
    vertices = []
    for _ in range(samples):
        res = _region_lp(true_region, rng.standard_normal(m))
        vertices.append(res.x)
    vertices = np.array(vertices)
    mixes = rng.dirichlet(np.ones(len(vertices)), size=samples) @ vertices
    return max(l1_distance_to_region(p, est_region) for p in np.vstack([vertices, mixes]))
