"""Top-level search for an approximate local Stackelberg equilibrium.

Optimize inside the current best-response polytope, look around the optimum
for neighbouring polytopes, and step into any neighbour whose utility at the
optimum is better by at least eps2. Stop when no neighbour improves.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry as geo
from . import learner as lrn
from .interaction import BudgetExhausted, br_oracle, drive_average_to, phase, play_repeated
from .opt_within import optimize_within_polytope
from .poly_search import SearchConfig, run_search

BURN_IN_CAP = 10**7


class ConfigError(ValueError):
    pass


class BurnInBudgetExceeded(RuntimeError):
    pass


class IterationCapExceeded(RuntimeError):
    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


class CrossingFailed(RuntimeError):
    pass


def default_alpha(m, n, sigma_lb, scale=0.5, radius=None):
    """scale * min(sigma/(m^2 n), R2 sigma/m^3); R2 defaults to sigma/(2m).

    The first cap keeps the shrunken estimate close to the true polytope, the
    second keeps the neighbour search's normal fits accurate.
    """
    radius = sigma_lb / (2 * m) if radius is None else radius
    return scale * min(sigma_lb / (m * m * n), radius * sigma_lb / m ** 3)


@dataclass
class LseConfig:
    eps: float
    delta: float
    alpha: float = None           # None: default_alpha(m, n, sigma_lb)
    region_floor: float = None    # None: twice the session's played floor
    sigma_lb: float = 1e-2
    eps2: float = None            # None: eps * delta
    max_outer: int = None         # None: n
    r_min: float = None           # only used for the reported slack
    search: SearchConfig = None

    def resolved(self, game, played_floor):
        cfg = LseConfig(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        m, n = game.m, game.n
        if cfg.alpha is None:
            cfg.alpha = default_alpha(m, n, cfg.sigma_lb)
        if cfg.region_floor is None:
            cfg.region_floor = 2 * played_floor
        if cfg.eps2 is None:
            cfg.eps2 = cfg.eps * cfg.delta
        if cfg.max_outer is None:
            cfg.max_outer = n
        if cfg.search is None:
            cfg.search = SearchConfig(sigma_lb=cfg.sigma_lb)
        cfg.validate(game, played_floor)
        return cfg

    def validate(self, game, played_floor):
        m, n = game.m, game.n
        checks = [
            (self.eps > 0, "eps > 0"),
            (0 < self.delta <= 2, "0 < delta <= 2"),
            (self.sigma_lb > 0, "sigma_lb > 0"),
            (self.alpha > 0, "alpha > 0"),
            (self.alpha <= self.sigma_lb / (m * m * n),
             f"alpha <= sigma_lb/(m^2 n) = {self.sigma_lb / (m * m * n):.6g}"),
            (self.alpha * math.sqrt(m) < self.sigma_lb,
             f"alpha*sqrt(m) < sigma_lb = {self.sigma_lb:g}"),
            (self.region_floor > played_floor,
             f"region_floor > played floor gamma = {played_floor:g}"),
            (self.region_floor * m < 1, "region_floor * m < 1"),
            (self.eps2 > 0, "eps2 > 0"),
        ]
        for ok, text in checks:
            if not ok:
                raise ConfigError(f"parameter check failed: {text}")

    def echo(self):
        out = asdict(self)
        out.pop("search", None)
        return out


@dataclass
class LseResult:
    x_star: np.ndarray
    b_star: int
    neighbors: list
    rounds_total: int
    rounds_improving: int
    rounds_other: int
    certified: bool
    status: str
    visited: list = field(default_factory=list)
    phase_rounds: dict = field(default_factory=dict)
    slack: float = math.inf
    monotone: bool = True
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "x_star": [float(v) for v in self.x_star],
            "b_star": int(self.b_star),
            "certified": bool(self.certified),
            "status": self.status,
            "rounds_total": int(self.rounds_total),
            "rounds_improving": int(self.rounds_improving),
            "rounds_other": int(self.rounds_other),
            "phase_rounds": {k: int(v) for k, v in sorted(self.phase_rounds.items())},
            "neighbors": [[int(b), float(u)] for b, u in self.neighbors],
            "visited": [[int(b), float(u)] for b, u in self.visited],
            "monotone": bool(self.monotone),
            "slack": float(self.slack),
            "config": self.config,
        }


def burn_in_length(state, alpha, cap=BURN_IN_CAP):
    """Smallest t with mu(t) <= alpha/2 (mu is nonincreasing)."""
    if state.deterministic:
        return 1
    target = alpha / 2
    if lrn.mu(state, cap) > target:
        raise BurnInBudgetExceeded(f"mu stays above {target:g} for {cap} rounds")
    lo, hi = 0, 1
    while lrn.mu(state, hi) > target:
        lo, hi = hi, min(2 * hi, cap)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if lrn.mu(state, mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def burn_in(session, alpha, x_init=None, cap=BURN_IN_CAP):
    """Play x_init (default uniform) until mu(t) <= alpha/2; returns t0."""
    m = session.m
    x = np.full(m, 1.0 / m) if x_init is None else np.asarray(x_init, dtype=float)
    t0 = burn_in_length(session.learner, alpha, cap)
    with phase(session, "burn_in"):
        play_repeated(session, x, max(0, t0 - session.t))
    return t0


def step_into(session, h_hat, target_action, alpha, floor=None, attempts=3):
    """Move the average to the far side of h_hat with margin alpha; confirm by oracle."""
    if not alpha > 0:
        raise ValueError("stepping across a boundary needs a positive margin")
    floor = session.gamma if floor is None else floor
    normal = np.asarray(h_hat.normal, dtype=float)
    m = normal.size
    start = session.avg.copy()
    G = np.vstack([-normal, np.eye(m)])
    with phase(session, "crossing"):
        for k in range(1, attempts + 1):
            landing = geo.project_onto_polyhedron(start, G, np.concatenate([[k * alpha], np.full(m, floor)]))
            if landing is None:
                break
            drive_average_to(session, landing)
            if br_oracle(session) == target_action:
                return landing
    raise CrossingFailed(f"could not confirm a crossing into action {target_action}")


def _nearest_boundary(state, x):
    """(distance, estimate) of the closest discovered constraint, or None."""
    best = None
    for h in state.discovered:
        d = float(h.normal @ x)
        if best is None or d < best[0]:
            best = (d, h)
    return best


def _search_point(state, x, alpha, delta, floor):
    """Point within alpha/4 of the nearest discovered boundary if that is within delta."""
    near = _nearest_boundary(state, x)
    if near is None or near[0] > delta:
        return x
    d, h = near
    goal = 0.25 * alpha
    if d <= goal:
        return x
    G = np.vstack([h.normal, -h.normal, np.eye(x.size)])
    rhs = np.concatenate([[goal], [-goal], np.full(x.size, floor)])
    moved = geo.project_onto_polyhedron(x, G, rhs)
    return x if moved is None else moved


def _transfer_probes(x, delta, floor):
    """x + s(e_j - e_k) for every ordered pair, s <= delta/2 (l1 step <= delta).

    Transfers stop short of the floor: driving a coordinate onto it costs a
    multiplicative factor in rounds.
    """
    m = x.size
    for j in range(m):
        for k in range(m):
            s = min(0.5 * delta, 0.75 * (x[k] - floor))
            if j == k or s < 0.1 * delta:
                continue
            p = x.copy()
            p[j] += s
            p[k] -= s
            yield p


def _wide_improvement(session, x_star, b, u_here, cfg):
    """Oracle-confirmed point within delta of x_star whose response beats u_here + eps2.

    The principal's own utilities bound what any response could pay at a
    probe, so probes that cannot improve are skipped and the rest are tried
    best-bound first.
    """
    u1 = np.delete(session.game.u1, b, axis=1)
    goal = u_here + cfg.eps2
    candidates = [(float((p @ u1).max()), i, p)
                  for i, p in enumerate(_transfer_probes(x_star, cfg.delta, cfg.region_floor))]
    candidates = sorted(c for c in candidates if c[0] >= goal)
    with phase(session, "wide_search"):
        for _, _, p in reversed(candidates):
            drive_average_to(session, p)
            a = br_oracle(session)
            if a != b and float(p @ session.game.u1[:, a]) >= goal:
                return a, p
    return None


def find_lse(session, eps, delta, config=None, x_init=None, strict=False, **overrides):
    """Run the full search; returns an LseResult (status certified / iteration_cap / ...)."""
    game = session.game
    base = config or LseConfig(eps, delta)
    if overrides:
        base = LseConfig(**{**{k: getattr(base, k) for k in base.__dataclass_fields__}, **overrides})
    cfg = base.resolved(game, session.gamma)
    alpha = cfg.alpha
    if session.t == 0:
        burn_in(session, alpha, x_init)
    visited = []
    seen = set()
    monotone = True
    status = "iteration_cap"
    neighbors = []
    x_star, b = session.avg.copy(), None
    slack = math.inf
    try:
        for _ in range(cfg.max_outer):
            b = br_oracle(session)
            x_star, state = optimize_within_polytope(
                session, b, session.avg.copy(), cfg.eps, cfg.delta, alpha, cfg.region_floor,
                sigma_lb=cfg.sigma_lb, r_min=cfg.r_min, search_config=cfg.search)
            slack = state.slack
            u_here = float(x_star @ game.u1[:, b])
            if visited and u_here < visited[-1][1] + cfg.eps2 - slack:
                monotone = False
            visited.append((b, u_here))
            if b in seen:
                monotone = False
            seen.add(b)
            if state.empty:
                status = "empty_estimate"
                break
            probe_at = _search_point(state, x_star, alpha, cfg.delta, cfg.region_floor)
            if probe_at is not x_star:
                drive_average_to(session, probe_at)
                if br_oracle(session) != b:
                    probe_at = x_star
            space = run_search(session, probe_at, alpha, 0.5 * alpha, b=b, config=cfg.search)
            found = list(zip(space.discovered, space.actions))
            neighbors = [(a, float(x_star @ game.u1[:, a])) for _, a in found]
            better = [(u, a, h) for (h, a), (_, u) in zip(found, neighbors) if u >= u_here + cfg.eps2]
            if not better:
                wide = _wide_improvement(session, x_star, b, u_here, cfg)
                if wide is not None:
                    with phase(session, "crossing"):
                        drive_average_to(session, wide[1])
                    continue
                drive_average_to(session, x_star)
                status = "certified"
                break
            _, a, h = max(better, key=lambda item: (item[0], -item[1]))
            drive_average_to(session, probe_at)
            try:
                step_into(session, h, a, alpha, floor=cfg.region_floor)
            except CrossingFailed:
                drive_average_to(session, x_star)
                status = "crossing_failed"
                break
        else:
            drive_average_to(session, x_star)
    except BudgetExhausted:
        status = "budget_exhausted"
    improving = session.phase_rounds.get("improving", 0)
    result = LseResult(
        x_star=x_star, b_star=-1 if b is None else int(b), neighbors=neighbors, rounds_total=session.t,
        rounds_improving=improving, rounds_other=session.t - improving,
        certified=status == "certified", status=status, visited=visited,
        phase_rounds=dict(session.phase_rounds), slack=slack, monotone=monotone,
        config=cfg.echo())
    if strict and status == "iteration_cap":
        raise IterationCapExceeded(f"no certificate after {cfg.max_outer} polytopes", result)
    return result
