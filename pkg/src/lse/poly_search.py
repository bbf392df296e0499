"""Discover the best-response polytopes around a point by random probing.

Probes are Gaussian steps from a base point, restricted to the directions not
yet pinned down by already-found boundaries. When enough probes land in one
new polytope, the shared boundary is located by bisection and its normal is
fitted as the smallest right singular vector of the boundary points.
"""

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .interaction import br_oracle, drive_average_to, phase


class DegenerateFit(ValueError):
    pass


class RankTooLow(DegenerateFit):
    pass


class AmbiguousSign(DegenerateFit):
    pass


class InsufficientClusterSize(RuntimeError):
    pass


def default_sample_count(m):
    return math.ceil(8 * m * m * math.log(m + 1))


def accuracy_schedule(alpha, sigma_lb, m):
    """alpha_j = alpha * (sigma/m^3)^(m+1-j), j = 1..m; reported, not used for movement."""
    ratio = sigma_lb / m ** 3
    return np.array([alpha * ratio ** (m + 1 - j) for j in range(1, m + 1)])


@dataclass
class SearchConfig:
    sample_count: int = None      # d; None uses default_sample_count(m)
    cluster_const: float = 4.0    # a new polytope needs >= d/(C m) probes
    eta_scale: float = 3.0        # probe std = eta_scale * alpha
    sigma_lb: float = 1e-2
    floor: float = None           # probes below this coordinate are redrawn
    fit_points: int = None        # boundary points per fit; None means 2m
    bisect_tol: float = 1e-12


@dataclass
class SearchSpace:
    anchor_action: int
    x_star: np.ndarray
    base_point: np.ndarray
    alpha: float
    step_scale: float
    accuracy_schedule: np.ndarray
    discovered: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    rounds: int = 0
    probes: int = 0
    anchor_point: np.ndarray = None

    def __post_init__(self):
        if self.anchor_point is None:
            self.anchor_point = self.base_point.copy()

    @property
    def m(self):
        return self.x_star.size

    @property
    def normals(self):
        if not self.discovered:
            return np.zeros((0, self.m))
        return np.array([h.normal for h in self.discovered])

    @property
    def dimension(self):
        return self.m - 1 - len(self.discovered)

    def add(self, estimate, action):
        self.discovered.append(estimate)
        self.actions.append(int(action))
        k = len(self.discovered)
        # probes run along the discovered boundaries (offset alpha_k); bisection
        # starts from a copy pushed alpha inside them
        offsets = np.full(k, self.accuracy_schedule[min(k, self.m) - 1])
        self.base_point = geo.project_onto_affine(self.x_star, self.normals, offsets)
        self.anchor_point = geo.project_onto_affine(self.x_star, self.normals, np.full(k, self.alpha))


def fit_hyperplane(Y, witness, inside_action=-1, outside_action=-1, accuracy=0.0):
    """Unit h minimizing ||Y h||, signed so that <h, witness> > 0."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    k, m = Y.shape
    if k < m - 1:
        raise RankTooLow(f"{k} points cannot pin a hyperplane in dimension {m}")
    _, s, vt = np.linalg.svd(Y, full_matrices=True)
    s = np.concatenate([s, np.zeros(m - s.size)])
    scale = max(s[0], 1e-300)
    if s[m - 2] <= 1e-12 * scale:
        raise RankTooLow("points span fewer than m-1 directions")
    if s[m - 2] - s[m - 1] <= 1e-9 * scale:
        raise AmbiguousSign("smallest singular direction is not unique")
    h = vt[-1]
    side = float(h @ np.asarray(witness, dtype=float))
    if abs(side) < 1e-12:
        raise AmbiguousSign("witness lies on the fitted hyperplane")
    if side < 0:
        h = -h
    return geo.HyperplaneEstimate(h / np.linalg.norm(h), int(inside_action),
                                  int(outside_action), float(accuracy), 1.0)


def _probe(session, p):
    drive_average_to(session, p)
    return br_oracle(session)


def _bisect(session, inside, outside, b, b_new, tol):
    """Boundary point between labels b and b_new on [inside, outside], or None."""
    lo, hi = inside.copy(), outside.copy()
    hi_label = b_new
    while np.abs(hi - lo).sum() > tol:
        mid = 0.5 * (lo + hi)
        y = _probe(session, mid)
        if y == b:
            lo = mid
        else:
            hi, hi_label = mid, y
    if hi_label != b_new:
        return None
    return 0.5 * (lo + hi)


def _boundary_points(session, space, anchor, cluster, b, b_new, cfg, floor):
    m = space.m
    want = cfg.fit_points or 2 * m
    # nearest cluster points first: shortest bisections, least chance of a third
    # polytope; segments that do cross one are skipped
    order = np.argsort([np.abs(p - anchor).sum() for p in cluster])
    points = []
    for idx in order:
        if len(points) >= want:
            break
        q = _bisect(session, anchor, cluster[idx], b, b_new, cfg.bisect_tol)
        if q is not None:
            points.append(q)
    # Probes only vary inside the current search space, so the boundary points
    # miss the directions of the discovered normals. Copies of the segments
    # shifted along those normals (deeper into the anchor's side) supply them.
    if space.discovered:
        N = space.normals
        N = N - N.mean(axis=1, keepdims=True)
        shift_scale = 0.25 * space.alpha
        need = max(m, want // 2)
        got = 0
        # the nearest cluster points sit on the new boundary and may shift
        # back across it, so walk the whole cluster
        for idx in order:
            if got >= need:
                break
            w = (shift_scale * session.rng.uniform(0.2, 1.0, N.shape[0])) @ N
            a2, p2 = anchor + w, cluster[idx] + w
            if min(a2.min(), p2.min()) < floor:
                continue
            if _probe(session, a2) != b or _probe(session, p2) != b_new:
                continue
            q = _bisect(session, a2, p2, b, b_new, cfg.bisect_tol)
            if q is not None:
                points.append(q)
                got += 1
    return points


def find_a_hyperplane(session, space, d=None, config=None, strict=False):
    """Probe around the base point; fit the boundary of the most-hit new polytope.

    Returns (HyperplaneEstimate, action) or None when no undiscovered polytope
    collects enough probes. A new polytope hit too rarely to fit is logged as a
    diagnostic, or raised as InsufficientClusterSize when strict.
    """
    cfg = config or SearchConfig()
    m = space.m
    d = d or cfg.sample_count or default_sample_count(m)
    floor = session.gamma if cfg.floor is None else cfg.floor
    known = {space.anchor_action, *space.actions}
    H = space.normals
    start = session.t
    probes, labels = [], []
    redraws = 0
    while len(probes) < d:
        p = space.base_point + geo.sample_tangent_gaussian(H, space.step_scale, session.rng)
        if p.min() < floor:
            redraws += 1
            if redraws > 10 * d:
                space.diagnostics.append(("redraw_cap", len(probes)))
                break
            continue
        probes.append(p)
        labels.append(_probe(session, p))
    space.probes += len(probes)
    counts = Counter(y for y in labels if y not in known)
    if not counts:
        space.rounds += session.t - start
        return None
    top = max(counts.values())
    b_new = min(y for y, c in counts.items() if c == top)
    if top < d / (cfg.cluster_const * m):
        space.diagnostics.append(("insufficient_cluster", b_new, top))
        space.rounds += session.t - start
        if strict:
            raise InsufficientClusterSize(f"action {b_new} answered only {top} of {d} probes")
        return None
    b = space.anchor_action
    anchor = space.anchor_point
    if _probe(session, anchor) != b:
        anchor = space.x_star
        if _probe(session, anchor) != b:
            space.diagnostics.append(("anchor_outside", b_new))
            space.rounds += session.t - start
            return None
    cluster = [p for p, y in zip(probes, labels) if y == b_new]
    points = _boundary_points(session, space, anchor, cluster, b, b_new, cfg, floor)
    space.rounds += session.t - start
    try:
        est = fit_hyperplane(np.array(points).reshape(-1, m), space.x_star, b, b_new, space.alpha)
    except DegenerateFit as exc:
        space.diagnostics.append(("fit_failed", b_new, str(exc)))
        return None
    return est, b_new


def new_search_space(session, x_star, alpha, b, config=None):
    cfg = config or SearchConfig()
    x_star = np.asarray(x_star, dtype=float).copy()
    m = x_star.size
    return SearchSpace(b, x_star, x_star.copy(), float(alpha), cfg.eta_scale * alpha,
                       accuracy_schedule(alpha, cfg.sigma_lb, m))


def run_search(session, x_star, alpha, rho, b=None, config=None):
    """Full search around x_star; returns the SearchSpace with every discovery."""
    if not 0 <= rho < alpha:
        raise ValueError(f"need 0 <= rho < alpha, got rho={rho}, alpha={alpha}")
    cfg = config or SearchConfig()
    with phase(session, "search"):
        if b is None:
            drive_average_to(session, x_star)
            b = br_oracle(session)
        space = new_search_space(session, x_star, alpha, b, cfg)
        while len(space.discovered) < space.m - 1:
            found = find_a_hyperplane(session, space, config=cfg)
            if found is None:
                break
            est, b_new = found
            try:
                space.add(est, b_new)
            except geo.RankDeficient:
                space.diagnostics.append(("dependent_normal", b_new))
                break
        drive_average_to(session, x_star)
    return space


def search_for_polytopes(session, x_star, alpha, rho, b=None, config=None):
    space = run_search(session, x_star, alpha, rho, b, config)
    return list(zip(space.discovered, space.actions))
