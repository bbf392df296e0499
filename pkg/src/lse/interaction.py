"""The principal's side of the repeated game.

The principal never sees u2. It commits to x^(t) each round and watches the
agent's responses; since a mean-based agent reacts to the running average, the
principal steers that average. Repeated plays of one strategy are simulated in
closed form, so long stretches cost O(1) work while the round counter stays
exact.
"""

import json
import math
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import digamma

from . import learner as lrn
from .game_core import lowest_best_response

DEFAULT_GAMMA = 1e-2
LAND_TOL = 1e-13
ROUND_CAP = 10**14


class StepTooLarge(ValueError):
    pass


class DegenerateDirection(ValueError):
    pass


class InteriorViolation(ValueError):
    pass


class NoCrossingDetected(RuntimeError):
    pass


class BudgetExhausted(RuntimeError):
    pass


def _harmonic_gap(t0, k):
    """sum_{s=t0+1}^{t0+k} 1/s."""
    if k <= 0:
        return 0.0
    if k <= 64:
        return math.fsum(1.0 / s for s in range(t0 + 1, t0 + k + 1))
    return float(digamma(t0 + k + 1) - digamma(t0 + 1))


@dataclass
class _Run:
    """`count` consecutive rounds starting at round `t0`.

    Plain runs repeat `x`. Fixed-step runs (u set) move the average eta/t per
    round toward u; there `x` is the block's mean strategy and per-round
    strategies are rebuilt from (avg0, u, eta).
    """
    t0: int
    x: np.ndarray
    count: int
    y: int = None
    u: np.ndarray = None
    eta: float = 0.0
    avg0: np.ndarray = None

    def strategy(self, k):
        if self.u is None:
            return self.x
        start = self.t0 - 1
        L0 = float(np.abs(self.u - self.avg0).sum())
        L = L0 - self.eta * _harmonic_gap(start, k)
        avg = self.u - (L / L0) * (self.u - self.avg0)
        return move_one_step(avg, start + k + 1, self.u, self.eta)


@dataclass
class Session:
    game: object
    learner: lrn.LearnerState
    gamma: float = DEFAULT_GAMMA
    seed: int = 0
    t: int = 0
    avg: np.ndarray = None
    history: list = field(default_factory=list)
    phase_rounds: Counter = field(default_factory=Counter)
    phase: str = "other"

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)
        if self.learner.n != self.game.n:
            raise ValueError("learner and game disagree on the number of agent actions")
        if not 0 <= self.gamma * self.game.m < 1:
            raise ValueError(f"gamma={self.gamma} leaves no room on the simplex")

    @property
    def m(self):
        return self.game.m


def new_session(game, learner_kind="fp", seed=0, gamma=DEFAULT_GAMMA, **learner_params):
    learner = lrn.make_learner(learner_kind, game.n, rng_seed=seed, **learner_params)
    return Session(game, learner, gamma=gamma, seed=seed)


@contextmanager
def phase(session, name):
    previous = session.phase
    session.phase = name
    try:
        yield
    finally:
        session.phase = previous


def _check_floor(session, x):
    if x.size != session.m:
        raise ValueError(f"strategy has length {x.size}, expected {session.m}")
    if x.min() < session.gamma - 1e-12:
        raise InteriorViolation(
            f"coordinate {x.min():.6g} below the interior floor {session.gamma:g}")


def _record(session, x, count, y=None):
    if session.t + count > ROUND_CAP:
        raise BudgetExhausted(f"round counter would exceed {ROUND_CAP}")
    x = np.array(x, dtype=float)
    x.flags.writeable = False
    session.history.append(_Run(session.t + 1, x, int(count), y))
    lrn.observe(session.learner, x @ session.game.u2, count)
    if session.avg is None:
        session.avg = x.copy()
    else:
        session.avg = session.avg + (count / (session.t + count)) * (x - session.avg)
    session.t += int(count)
    session.phase_rounds[session.phase] += int(count)


def play_round(session, x_t):
    x = np.asarray(x_t, dtype=float).reshape(-1)
    _check_floor(session, x)
    y = lrn.choose_action(session.learner)
    _record(session, x, 1, y)
    return y


def play_repeated(session, x, count):
    """Play x for `count` rounds; the agent's responses are not observed."""
    if count <= 0:
        return
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_floor(session, x)
    _record(session, x, count)


def move_one_step(avg, t, u, eta):
    """Strategy to play at round t so the average moves eta/t (l1) toward u."""
    avg = np.asarray(avg, dtype=float)
    u = np.asarray(u, dtype=float)
    if eta < 0:
        raise StepTooLarge("step size must be nonnegative")
    reach = float(np.abs(u - avg).sum())
    if eta == 0:
        return avg.copy()
    if reach == 0.0:
        raise DegenerateDirection("direction point equals the current average")
    if eta > reach * (1 + 1e-12):
        raise StepTooLarge(f"eta={eta} exceeds the maximum feasible step {reach}")
    w = min(eta / reach, 1.0)
    return (1.0 - w) * avg + w * u


def ray_exit(start, direction, floor):
    """Farthest point start + s*direction (s >= 0) with every coordinate >= floor."""
    neg = direction < 0
    if not np.any(neg):
        raise DegenerateDirection("direction does not leave the simplex")
    s = np.min((start[neg] - floor) / (-direction[neg]))
    return start + max(s, 0.0) * direction


class DriveResult(NamedTuple):
    rounds: int
    reached: bool


def _clip_to_floor(x, floor):
    """Raise coordinates to the floor, taking the excess from those above it."""
    x = np.maximum(x, floor)
    excess = x.sum() - 1.0
    room = x - floor
    if excess > 0 and room.sum() > 0:
        x = x - excess * room / room.sum()
    elif excess < 0:
        x = x - excess / x.size
    return x


def _land(session, target, u):
    """Final partial round placing the average on target; x lies on [avg, u]."""
    tau = session.t + 1
    x = tau * target - (tau - 1) * session.avg
    x = _clip_to_floor(x, session.gamma)
    play_repeated(session, x, 1)


def drive_average_to(session, target, max_rounds=None, step=None):
    """Steer the running average onto `target`.

    With step=None every round takes the maximum feasible step (x = ray exit
    point), so the full rounds collapse into one closed-form batch. A fixed
    `step` is the per-round step size eta, capped at the feasible maximum.
    """
    target = np.asarray(target, dtype=float)
    _check_floor(session, target)
    budget = ROUND_CAP if max_rounds is None else int(max_rounds)
    if session.t == 0:
        if budget < 1:
            return DriveResult(0, False)
        play_repeated(session, target, 1)
        return DriveResult(1, True)
    gap = target - session.avg
    dist = float(np.abs(gap).sum())
    if dist <= LAND_TOL:
        return DriveResult(0, True)
    direction = gap / dist
    u = ray_exit(session.avg, direction, session.gamma)
    if step is not None:
        return _drive_fixed_step(session, target, u, float(step), budget)
    reach = float(np.abs(u - session.avg).sum())
    slack = reach - dist
    t = session.t
    if slack <= 0:
        full = budget
    else:
        full = max(0, math.ceil(t * reach / slack - t - 1))
    if full >= budget:
        play_repeated(session, u, budget)
        return DriveResult(budget, False)
    play_repeated(session, u, full)
    _land(session, target, u)
    return DriveResult(full + 1, True)


def _fixed_step_block(session, target, u, step, budget):
    """Closed form for the stretch of rounds that each move exactly step/t.

    Stops one round before landing is possible, or when the step would exceed
    the remaining reach. Returns the number of rounds played.
    """
    t0 = session.t
    a0 = session.avg.copy()
    L0 = float(np.abs(u - a0).sum())
    D = float(np.abs(target - a0).sum())

    def moved(k):
        return step * _harmonic_gap(t0, k)

    def stop(k):
        # landing fits in round t0+k+1, or the next step would be capped
        rem = D - moved(k)
        return rem * (t0 + k + 1) <= step or L0 - moved(k) <= step

    if stop(0):
        return 0
    hi = 1
    while not stop(hi) and hi < budget:
        hi *= 2
    hi = min(hi, budget)
    if not stop(hi):
        k = hi
    else:
        lo = hi // 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if stop(mid):
                hi = mid
            else:
                lo = mid
        k = hi
    # a run that reaches stop(k) is played for k rounds; the caller finishes
    k = min(k, budget)
    if k <= 0:
        return 0
    L = L0 - moved(k)
    avg_k = u - (L / L0) * (u - a0)
    mean_x = ((t0 + k) * avg_k - t0 * a0) / k
    _record(session, mean_x, k)
    session.history[-1].u = u.copy()
    session.history[-1].eta = float(step)
    session.history[-1].avg0 = a0
    session.avg = avg_k
    return k


def _drive_fixed_step(session, target, u, step, budget):
    used = _fixed_step_block(session, target, u, step, budget)
    while used < budget:
        gap = float(np.abs(target - session.avg).sum())
        if gap <= LAND_TOL:
            return DriveResult(used, True)
        tau = session.t + 1
        reach = float(np.abs(u - session.avg).sum())
        if gap * tau <= min(step, reach):
            _land(session, target, u)
            return DriveResult(used + 1, True)
        if reach <= step:
            # the cap binds from here on: same as maximal steps
            rest = drive_average_to(session, target, budget - used)
            return DriveResult(used + rest.rounds, rest.reached)
        play_repeated(session, move_one_step(session.avg, tau, u, min(step, reach)), 1)
        used += 1
    return DriveResult(used, False)


def oracle_repeats(session, alpha, delta_sep, literal=False):
    """Number of replay rounds the best-response oracle spends at round t."""
    state = session.learner
    if state.deterministic:
        return 1
    t = max(session.t, 1)
    if literal:
        p = session.game.n * alpha * delta_sep
    else:
        p = session.game.n * lrn.mu(state, t)
    p = min(max(p, 0.0), 0.5)
    return max(1, math.ceil(2.0 * math.log(t) / (1.0 - p) ** 2))


def br_oracle(session, alpha=0.0, delta_sep=1.0, literal=False):
    """Replay the current average and return the most frequent response."""
    if session.avg is None:
        raise RuntimeError("oracle needs at least one played round")
    x = session.avg.copy()
    k = oracle_repeats(session, alpha, delta_sep, literal)
    counts = np.zeros(session.game.n, dtype=int)
    for _ in range(k):
        counts[play_round(session, x)] += 1
    session.avg = x
    return int(np.argmax(counts))


def detect_br_change(session, x_before, x_after, alpha=0.0, delta_sep=1.0):
    drive_average_to(session, x_before)
    before = br_oracle(session, alpha, delta_sep)
    drive_average_to(session, x_after)
    after = br_oracle(session, alpha, delta_sep)
    return before != after


class BoundarySearch(NamedTuple):
    x_near: np.ndarray
    x_far: np.ndarray
    b_near: int
    b_far: int
    rounds: int


def binary_search_boundary(session, x_left, x_right, alpha, delta_sep=1.0,
                           b_left=None, b_right=None):
    """Halve the segment [x_left, x_right] until its ends are alpha (l1) apart.

    The returned x_near keeps the left response; the session average ends there.
    Step sizes follow the halving schedule: gamma + len/2^i moving left and
    len*t + len/2^i (capped at the feasible maximum) moving right.
    """
    start_t = session.t
    left = np.asarray(x_left, dtype=float).copy()
    right = np.asarray(x_right, dtype=float).copy()
    if b_left is None:
        drive_average_to(session, left)
        b_left = br_oracle(session, alpha, delta_sep)
    if b_right is None:
        drive_average_to(session, right)
        b_right = br_oracle(session, alpha, delta_sep)
    if b_left == b_right:
        drive_average_to(session, right)
        b_right = br_oracle(session, alpha, delta_sep)
        if b_left == b_right:
            raise NoCrossingDetected(f"both endpoints answer action {b_left}")
    seg = float(np.abs(left - right).sum())
    if session.t == 0:
        scale = seg
    else:
        scale = seg * max(session.t, 1)
    halvings = math.ceil(math.log2(seg / alpha)) if seg > alpha else 0
    for i in range(1, halvings + 1):
        mid = 0.5 * (left + right)
        going_left = np.abs(mid - left).sum() < np.abs(session.avg - left).sum()
        beta = session.gamma if going_left else scale
        drive_average_to(session, mid, step=beta + seg / 2**i)
        y = br_oracle(session, alpha, delta_sep)
        if y == b_left:
            left = mid
        else:
            right, b_right = mid, y
    drive_average_to(session, left)
    return BoundarySearch(left, right, int(b_left), int(b_right), session.t - start_t)


@dataclass
class ImprovementRun:
    """Outcome of stepping the average toward an LP target inside one polytope.

    steps[i] = (t, u1_before, u1_after) for every improvement round, stored
    as blocks of consecutive rounds that play the same target.
    """
    converged: bool
    x_left: np.ndarray = None
    x_right: np.ndarray = None
    b_right: int = None
    blocks: list = field(default_factory=list)

    @property
    def n_steps(self):
        return sum(blk.count for blk in self.blocks)

    def step_arrays(self):
        ts, before, after = [], [], []
        for blk in self.blocks:
            tb, ub, ua = blk.arrays()
            ts.append(tb)
            before.append(ub)
            after.append(ua)
        if not ts:
            return np.zeros(0, int), np.zeros(0), np.zeros(0)
        return np.concatenate(ts), np.concatenate(before), np.concatenate(after)

    def min_scaled_gain(self):
        """Smallest t * (u1_after - u1_before) over all steps."""
        if not self.blocks:
            return math.inf
        return min(blk.min_scaled_gain() for blk in self.blocks)


@dataclass
class _StepBlock:
    t0: int          # rounds played before the first step
    u_start: float   # U1(avg, b) before the first step
    u_target: float  # U1(target, b)
    count: int

    def _before(self, j):
        return self.u_target - (self.t0 / (self.t0 + j)) * (self.u_target - self.u_start)

    def arrays(self):
        j = np.arange(self.count, dtype=float)
        return self.t0 + j + 1, self._before(j), self._before(j + 1)

    def min_scaled_gain(self):
        # t * gain equals the remaining utility gap, which shrinks every step
        return self.u_target - float(self._before(self.count - 1))


def advance_toward(session, target, b, threshold, alpha=0.0, delta_sep=1.0,
                   max_steps=10**7):
    """Improvement steps: play `target` while U1(target,b) - U1(avg,b) >= threshold.

    After each step the new average is checked with the oracle; the run stops
    at the first average whose response differs from b.
    """
    target = np.asarray(target, dtype=float)
    _check_floor(session, target)
    col = session.game.u1[:, b]
    if session.learner.deterministic:
        return _advance_deterministic(session, target, b, col, threshold, alpha, delta_sep)
    run = ImprovementRun(converged=True)
    u_target = float(target @ col)
    for _ in range(max_steps):
        u_now = float(session.avg @ col)
        if u_target - u_now < threshold:
            return run
        prev = session.avg.copy()
        t_before = session.t
        play_round(session, target)
        run.blocks.append(_StepBlock(t_before, u_now, u_target, 1))
        y = br_oracle(session, alpha, delta_sep)
        if y != b:
            run.converged = False
            run.x_left, run.x_right, run.b_right = prev, session.avg.copy(), y
            return run
    raise BudgetExhausted(f"improvement run exceeded {max_steps} steps")


def _advance_deterministic(session, target, b, col, threshold, alpha, delta_sep):
    # Fictitious play answers round t with the best response to the average
    # after round t-1, so each improvement round also reports on the previous
    # step; no separate replay round is needed until the run ends.
    run = ImprovementRun(converged=True)
    t0 = session.t
    a0 = session.avg.copy()
    u_start = float(a0 @ col)
    u_target = float(target @ col)
    gap0 = u_target - u_start
    if gap0 < threshold:
        return run
    # number of steps before the utility gap drops below threshold
    n_conv = math.floor(t0 * gap0 / threshold - t0) + 1
    while n_conv > 0 and (t0 / (t0 + n_conv - 1)) * gap0 < threshold:
        n_conv -= 1
    while (t0 / (t0 + n_conv)) * gap0 >= threshold:
        n_conv += 1
    u2 = session.game.u2
    s_target = target @ u2
    s_diff = (a0 - target) @ u2

    def avg_at(j):
        return target + (t0 / (t0 + j)) * (a0 - target)

    def response(j):
        return int(np.argmax(s_target + (t0 / (t0 + j)) * s_diff))

    first_change = _first_change(t0, s_target, s_diff, b, n_conv)
    if first_change is not None and first_change < n_conv:
        steps = first_change + 1
    else:
        first_change = None
        steps = n_conv
    run.blocks.append(_StepBlock(t0, u_start, u_target, steps))
    play_repeated(session, target, steps)
    session.avg = avg_at(steps)
    if first_change is not None:
        run.converged = False
        run.x_left, run.x_right = avg_at(first_change - 1), avg_at(first_change)
        run.b_right = response(first_change)
        return run
    y = br_oracle(session, alpha, delta_sep)
    if y != b:
        run.converged = False
        run.x_left, run.x_right, run.b_right = avg_at(steps - 1), avg_at(steps), y
    return run


def _first_change(t0, s_target, s_diff, b, limit):
    """First j in [1, limit) where argmax(s_target + c_j s_diff) != b, c_j = t0/(t0+j)."""
    def resp(j):
        return int(np.argmax(s_target + (t0 / (t0 + j)) * s_diff))

    a = s_target[b] - s_target
    slope = s_diff[b] - s_diff
    c_star = 0.0
    for k in range(a.size):
        if k == b or slope[k] <= 0:
            continue
        c_star = max(c_star, -a[k] / slope[k])
    if c_star <= 0:
        return None
    j = max(1, math.floor(t0 / c_star - t0))
    # settle rounding near the crossing with exact evaluations
    while j > 1 and resp(j - 1) != b:
        j -= 1
    while j < limit and resp(j) == b:
        j += 1
        if j > t0 / c_star - t0 + 3:
            break
    if j >= limit or resp(j) == b:
        return None
    return j


def rounds_in_history(session):
    return sum(run.count for run in session.history)


def iter_rounds(session):
    """Yield (t, x, y) for every round, recomputing unobserved responses."""
    state = session.learner
    cum = np.zeros(session.game.n)
    u2 = session.game.u2
    for run in session.history:
        for k in range(run.count):
            t = run.t0 + k
            x = run.strategy(k)
            y = run.y if run.y is not None else lrn.choose_action(state, cum, t)
            yield t, x, y
            cum = cum + x @ u2


def recompute_average(session):
    total = np.zeros(session.m)
    for run in session.history:
        total += run.count * run.x
    return total / max(session.t, 1)


def write_transcript(session, fh):
    """JSON-lines transcript: one {t, x, y, u1, u2} object per round."""
    g = session.game
    for t, x, y in iter_rounds(session):
        rec = {
            "t": int(t),
            "x": [float(v) for v in x],
            "y": int(y),
            "u1": float(x @ g.u1[:, y]),
            "u2": float(x @ g.u2[:, y]),
        }
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def exact_best_response(session, x=None):
    """Ground-truth response of fictitious play at x (tests and diagnostics only)."""
    return lowest_best_response(session.game, session.avg if x is None else x)
