"""Best-response polytopes on the simplex.

P_b = {x in simplex : <u_b - u_b', x> >= 0 for all b'}; every boundary passes
through the origin, so on the simplex a hyperplane is described by its normal
alone. Estimated polytopes are HalfspaceSets of unit normals with margins plus
a coordinate floor.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import lsq_linear, nnls

MAX_QP_DIM = 16


class IdenticalColumns(ValueError):
    pass


class RankDeficient(ValueError):
    pass


class NullSpaceEmpty(ValueError):
    pass


class DimensionTooLarge(ValueError):
    pass


class _Infeasible:
    def __repr__(self):
        return "Infeasible"

    def __bool__(self):
        return False


Infeasible = _Infeasible()


@dataclass(frozen=True)
class HyperplaneEstimate:
    normal: np.ndarray
    inside_action: int
    outside_action: int
    accuracy: float = 0.0
    norm: float = 1.0

    def flipped(self):
        return HyperplaneEstimate(-self.normal, self.outside_action, self.inside_action,
                                  self.accuracy, self.norm)


@dataclass(frozen=True)
class HalfspaceSet:
    """{x : normals @ x >= margins, x >= floor, sum(x) = 1}."""
    m: int
    normals: np.ndarray = None
    margins: np.ndarray = None
    floor: float = 0.0
    labels: tuple = field(default=())

    def __post_init__(self):
        raw = [] if self.normals is None else list(np.ravel(np.asarray(self.normals, dtype=object)))
        raw += [] if self.margins is None else list(np.ravel(np.asarray(self.margins, dtype=object)))
        dtype = object if any(isinstance(v, Fraction) for v in raw) else float
        normals = np.zeros((0, self.m)) if self.normals is None else np.atleast_2d(
            np.asarray(self.normals, dtype=dtype))
        margins = np.zeros(0) if self.margins is None else np.asarray(
            self.margins, dtype=dtype).reshape(-1)
        if normals.shape != (margins.size, self.m):
            raise ValueError(f"normals {normals.shape} do not match margins ({margins.size},)")
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "margins", margins)

    @property
    def k(self):
        return self.margins.size

    def with_constraint(self, normal, margin, label=None):
        return HalfspaceSet(self.m, np.vstack([self.normals, normal]),
                            np.append(self.margins, margin), self.floor,
                            self.labels + (label,))

    def slack(self, x):
        x = np.asarray(x, dtype=float)
        parts = [self.normals @ x - self.margins, x - self.floor]
        return np.concatenate(parts)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return abs(x.sum() - 1) <= tol and bool(np.all(self.slack(x) >= -tol))


@dataclass(frozen=True)
class ConstraintMatrices:
    H: np.ndarray
    G: np.ndarray


def hyperplane(game, b, b_other):
    if b == b_other:
        raise ValueError("a hyperplane needs two distinct actions")
    h = game.u2[:, b] - game.u2[:, b_other]
    norm = float(np.linalg.norm(h))
    if norm == 0.0:
        raise IdenticalColumns(f"agent actions {b} and {b_other} have identical utilities")
    return HyperplaneEstimate(h / norm, int(b), int(b_other), 0.0, norm)


def constraint_matrices(game, b):
    others = [k for k in range(game.n) if k != b]
    H = game.u2[:, [b]] - game.u2[:, others]
    H = H.T
    G = np.vstack([H, np.ones((1, game.m)), np.eye(game.m)])
    return ConstraintMatrices(H, G)


def true_region(game, b, floor=0.0):
    """P_b (optionally floored) as a HalfspaceSet with unnormalized rows."""
    cm = constraint_matrices(game, b)
    return HalfspaceSet(game.m, cm.H, np.zeros(cm.H.shape[0]), floor)


# ---------------------------------------------------------------- simplex LP

def _is_rational(values):
    return all(isinstance(v, (Rational, Fraction)) for v in values)


def _pivot(T, r, c):
    T[r] = T[r] / T[r, c]
    for i in range(T.shape[0]):
        if i != r and T[i, c] != 0:
            T[i] = T[i] - T[i, c] * T[r]


def _run_simplex(T, basis, allowed, eps):
    """Bland's rule on tableau T (last row = reduced costs, minimize)."""
    rows = T.shape[0] - 1
    while True:
        enter = None
        for j in range(allowed):
            if T[-1, j] < -eps:
                enter = j
                break
        if enter is None:
            return True
        best, leave = None, None
        for i in range(rows):
            a = T[i, enter]
            if a > eps:
                ratio = T[i, -1] / a
                if best is None or ratio < best - eps or (
                        abs(ratio - best) <= eps and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            return False
        _pivot(T, leave, enter)
        basis[leave] = enter


def _solve_standard(c, A, b, exact):
    """min c.y s.t. A y = b, y >= 0. Returns (y, value) or None if infeasible."""
    zero = Fraction(0) if exact else 0.0
    one = Fraction(1) if exact else 1.0
    eps = 0 if exact else 1e-11
    dtype = object if exact else float
    A = np.array(A, dtype=dtype)
    b = np.array(b, dtype=dtype)
    rows, cols = A.shape
    for i in range(rows):
        if b[i] < 0:
            A[i] = -A[i]
            b[i] = -b[i]
    T = np.full((rows + 1, cols + rows + 1), zero, dtype=dtype)
    T[:rows, :cols] = A
    for i in range(rows):
        T[i, cols + i] = one
    T[:rows, -1] = b
    basis = [cols + i for i in range(rows)]
    # phase one: minimize the sum of artificials
    T[-1, :] = zero
    for i in range(rows):
        T[-1] = T[-1] - T[i]
    for i in range(rows):
        T[-1, cols + i] = zero
    _run_simplex(T, basis, cols + rows, eps)
    if -T[-1, -1] > (0 if exact else 1e-9):
        return None
    # drive remaining artificials out of the basis
    keep = []
    for i in range(rows):
        if basis[i] >= cols:
            pivot_col = next((j for j in range(cols) if abs(T[i, j]) > eps), None)
            if pivot_col is None:
                continue
            _pivot(T, i, pivot_col)
            basis[i] = pivot_col
        keep.append(i)
    T = np.vstack([T[keep], T[-1:]])
    basis = [basis[i] for i in keep]
    T = np.hstack([T[:, :cols], T[:, -1:]])
    cvec = np.array(c, dtype=dtype)
    T[-1, :cols] = cvec
    T[-1, -1] = zero
    for i, bi in enumerate(basis):
        if T[-1, bi] != 0:
            T[-1] = T[-1] - T[-1, bi] * T[i]
    if not _run_simplex(T, basis, cols, eps):
        raise ArithmeticError("LP is unbounded")
    y = np.full(cols, zero, dtype=dtype)
    for i, bi in enumerate(basis):
        y[bi] = T[i, -1]
    return y, -T[-1, -1]


def _lp_general(obj, A_ge, b_ge, A_eq, b_eq, lb, exact):
    """max obj.x s.t. A_ge x >= b_ge, A_eq x = b_eq, x >= lb."""
    m = len(obj)
    dtype = object if exact else float
    conv = (lambda v: Fraction(v)) if exact else float
    A_ge = np.array([[conv(v) for v in row] for row in A_ge], dtype=dtype).reshape(-1, m)
    A_eq = np.array([[conv(v) for v in row] for row in A_eq], dtype=dtype).reshape(-1, m)
    lb = np.array([conv(v) for v in lb], dtype=dtype)
    b_ge = np.array([conv(v) for v in b_ge], dtype=dtype) - A_ge.dot(lb)
    b_eq = np.array([conv(v) for v in b_eq], dtype=dtype) - A_eq.dot(lb)
    k = A_ge.shape[0]
    # y = x - lb >= 0, slack s >= 0 with A_ge y - s = b_ge
    top = np.hstack([A_ge, -np.eye(k, dtype=float).astype(dtype)]) if k else np.zeros((0, m + k), dtype=dtype)
    bottom = np.hstack([A_eq, np.zeros((A_eq.shape[0], k), dtype=dtype)])
    A = np.vstack([top, bottom])
    b = np.concatenate([b_ge, b_eq])
    c = np.concatenate([-np.array([conv(v) for v in obj], dtype=dtype), np.zeros(k, dtype=dtype)])
    if exact:
        A = np.array([[Fraction(v) for v in row] for row in A], dtype=object).reshape(A.shape)
        c = np.array([Fraction(v) for v in c], dtype=object)
    out = _solve_standard(c, A, b, exact)
    if out is None:
        return None
    y, value = out
    return y[:m] + lb


def lp_maximize(objective, region, exact=None):
    """Lexicographically smallest optimal vertex of max <objective, x> over region.

    Rational inputs (ints/Fractions) are solved exactly unless exact=False.
    Returns `Infeasible` when the region is empty.
    """
    objective = list(objective)
    m = region.m
    normals = region.normals
    margins = region.margins
    if exact is None:
        flat = objective + list(np.ravel(normals)) + list(margins) + [region.floor]
        exact = _is_rational(flat) or (_is_rational(objective) and region.k == 0
                                       and isinstance(region.floor, (int, Fraction)))
    A_ge = [list(r) for r in normals]
    b_ge = list(margins)
    A_eq = [[1] * m]
    b_eq = [1]
    lb = [region.floor] * m
    x = _lp_general(objective, A_ge, b_ge, A_eq, b_eq, lb, exact)
    if x is None:
        return Infeasible
    conv = Fraction if exact else float
    best = sum(conv(o) * v for o, v in zip(objective, x))
    tol = 0 if exact else 1e-12 * max(1.0, abs(best))
    # lexicographic tie-break among optimal vertices
    fixed = []
    for j in range(m):
        A2 = A_ge + [objective] + [[-(1 if i == jj else 0) for i in range(m)] for jj, _ in fixed]
        b2 = b_ge + [best - tol] + [-(val + tol) for _, val in fixed]
        e = [-(1 if i == j else 0) for i in range(m)]
        xj = _lp_general(e, A2, b2, A_eq, b_eq, lb, exact)
        # phase one tolerates ~1e-9 infeasibility; keep the last clean vertex instead
        if xj is None or (not exact and not _clean(xj, objective, best - 2 * tol, A_ge, b_ge, lb)):
            break
        fixed.append((j, xj[j]))
        x = xj
    if exact:
        return np.array(x, dtype=object)
    x = np.asarray(x, dtype=float)
    # tie-break slack can leave ~1e-12 residue on coordinates that sit at the floor
    x = np.where(x < region.floor + 1e-10, float(region.floor), x)
    x[np.argmax(x)] += 1.0 - x.sum()
    return x


def _clean(x, objective, min_value, A_ge, b_ge, lb, tol=1e-12):
    x = np.asarray(x, dtype=float)
    if float(np.dot(objective, x)) < min_value or np.any(x < np.asarray(lb, dtype=float) - tol):
        return False
    if len(A_ge) and np.any(np.asarray(A_ge, dtype=float) @ x < np.asarray(b_ge, dtype=float) - tol):
        return False
    return True


# ---------------------------------------------------------- projections, QP

def _simplex_tangent_basis(m):
    return null_space(np.ones((1, m)))


def project_onto_affine(x, H, rhs):
    """Euclidean projection of x onto {z : H z = rhs, sum(z) = 1}."""
    x = np.asarray(x, dtype=float)
    H = np.zeros((0, x.size)) if H is None else np.atleast_2d(np.asarray(H, dtype=float))
    rhs = np.zeros(0) if rhs is None else np.asarray(rhs, dtype=float).reshape(-1)
    if H.size == 0:
        H = np.zeros((0, x.size))
    A = np.vstack([H, np.ones((1, x.size))])
    c = np.append(rhs, 1.0)
    if A.shape[0] > x.size or min_singular_value(A) <= 1e-10:
        raise RankDeficient("constraint rows are linearly dependent")
    lam = np.linalg.solve(A @ A.T, A @ x - c)
    return x - A.T @ lam


def sample_tangent_gaussian(H_hat, eta, rng, size=None):
    """Gaussian step in null(H_hat) intersected with {sum z = 0}, std eta per basis direction."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    phi = tangent_basis(H_hat)
    if phi.shape[1] == 0:
        raise NullSpaceEmpty("search space has dimension zero")
    if size is None:
        return phi @ (eta * rng.standard_normal(phi.shape[1]))
    return (eta * rng.standard_normal((size, phi.shape[1]))) @ phi.T


def tangent_basis(H_hat, m=None):
    H_hat = np.atleast_2d(np.asarray(H_hat, dtype=float))
    if m is None:
        m = H_hat.shape[1]
    if H_hat.size == 0:
        H_hat = np.zeros((0, m))
    A = np.vstack([H_hat, np.ones((1, m))])
    return null_space(A, rcond=1e-10)


def min_singular_value(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        raise ValueError("matrix is empty")
    return float(np.linalg.svd(A, compute_uv=False).min())


def _nnls_optimal(M, target, u, tol=1e-9):
    g = M.T @ (M @ u - target)
    scale = tol * max(1.0, np.abs(M).max()) * max(1.0, np.abs(u).max(initial=0.0))
    return np.all(g >= -scale) and np.all(np.abs(g[u > 0]) <= scale)


def _least_distance(E, f):
    """min ||w|| s.t. E w >= f via the NNLS dual; None if infeasible."""
    p = E.shape[1]
    if E.shape[0] == 0 or np.all(f <= 0):
        return np.zeros(p)
    M = np.vstack([E.T, f.reshape(1, -1)])
    target = np.zeros(p + 1)
    target[-1] = 1.0
    u, _ = nnls(M, target, maxiter=50 * M.shape[1])
    if not _nnls_optimal(M, target, u):
        # scipy's nnls can return a non-optimal point with rnorm 0
        u = lsq_linear(M, target, bounds=(0.0, np.inf), method="bvls", tol=1e-15).x
    r = M @ u - target
    if np.linalg.norm(r) < 1e-12 or abs(r[-1]) < 1e-14:
        return None
    return -r[:p] / r[-1]


def project_onto_polyhedron(x, G, h):
    """Euclidean projection of x onto {z : G z >= h, sum(z) = 1}; None if empty."""
    x = np.asarray(x, dtype=float)
    m = x.size
    G = np.atleast_2d(np.asarray(G, dtype=float)).reshape(-1, m)
    h = np.asarray(h, dtype=float).reshape(-1)
    z0 = x + (1.0 - x.sum()) / m
    N = _simplex_tangent_basis(m)
    w = _least_distance(G @ N, h - G @ z0)
    if w is None:
        return None
    z = z0 + N @ w
    if np.any(G @ z - h < -1e-7 * max(1.0, np.abs(h).max(initial=0.0))):
        return None
    return z


def project_onto_region(x, region):
    m = region.m
    G = np.vstack([region.normals, np.eye(m)])
    h = np.concatenate([region.margins, np.full(m, region.floor)])
    return project_onto_polyhedron(x, G, h)


def dist_to_polytope(x, b, game):
    if game.m > MAX_QP_DIM:
        raise DimensionTooLarge(f"m={game.m} exceeds the cap of {MAX_QP_DIM}")
    cm = constraint_matrices(game, b)
    G = np.vstack([cm.H, np.eye(game.m)])
    h = np.zeros(G.shape[0])
    z = project_onto_polyhedron(x, G, h)
    if z is None:
        return math.inf
    return float(np.linalg.norm(z - np.asarray(x, dtype=float)))


def surrounding_polytopes(x, radius, game, tol=1e-9):
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    return {b for b in range(game.n) if dist_to_polytope(x, b, game) <= radius + tol}


def separation_radii(sigma_lb, m):
    """(R1, R2) from the polytope-separation lemma; R2 uses the sigma/(2m) variant."""
    return sigma_lb / (2 * m ** 1.5), sigma_lb / (2 * m)
