"""Mean-based learning agents with full-information feedback.

Every learner keeps the summed per-round utility of each action. Randomness
for the decision at round t comes from a generator keyed on (rng_seed, t), so
the action at any round can be recomputed from the cumulative rewards alone.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class QueryBeforeFirstRound(RuntimeError):
    pass


class LearnerKind(str, enum.Enum):
    FICTITIOUS_PLAY = "fp"
    MULTIPLICATIVE_WEIGHTS = "mw"
    FTPL = "ftpl"
    EPSILON_GREEDY = "egreedy"


_ALIASES = {
    "fictitiousplay": LearnerKind.FICTITIOUS_PLAY,
    "fictitious_play": LearnerKind.FICTITIOUS_PLAY,
    "multiplicativeweights": LearnerKind.MULTIPLICATIVE_WEIGHTS,
    "multiplicative_weights": LearnerKind.MULTIPLICATIVE_WEIGHTS,
    "hedge": LearnerKind.MULTIPLICATIVE_WEIGHTS,
    "epsilongreedy": LearnerKind.EPSILON_GREEDY,
    "epsilon_greedy": LearnerKind.EPSILON_GREEDY,
}

# Default constants in front of each mu schedule.
DEFAULT_PARAMS = {
    LearnerKind.FICTITIOUS_PLAY: {},
    LearnerKind.MULTIPLICATIVE_WEIGHTS: {"lr_scale": 1.0, "mu_scale": 1.0},
    LearnerKind.FTPL: {"noise_scale": 1.0, "mu_scale": 1.0},
    LearnerKind.EPSILON_GREEDY: {"eps_scale": 1.0},
}


def parse_kind(kind):
    if isinstance(kind, LearnerKind):
        return kind
    key = str(kind).strip().lower()
    if key in _ALIASES:
        return _ALIASES[key]
    return LearnerKind(key)


@dataclass
class LearnerState:
    kind: LearnerKind
    cum_rewards: np.ndarray
    t: int = 0
    params: dict = field(default_factory=dict)
    rng_seed: int = 0

    @property
    def n(self):
        return self.cum_rewards.size

    @property
    def deterministic(self):
        return self.kind is LearnerKind.FICTITIOUS_PLAY


def make_learner(kind, n, rng_seed=0, **params):
    kind = parse_kind(kind)
    merged = dict(DEFAULT_PARAMS[kind])
    unknown = set(params) - set(merged)
    if unknown:
        raise ValueError(f"unknown parameters for {kind.value}: {sorted(unknown)}")
    merged.update(params)
    return LearnerState(kind, np.zeros(int(n)), 0, merged, int(rng_seed))


def mu(state, t):
    """Mean-based slack at round t (nonincreasing in t)."""
    if t < 1:
        raise ValueError("mu is defined for t >= 1")
    kind, p, n = state.kind, state.params, state.n
    if kind is LearnerKind.FICTITIOUS_PLAY:
        return 0.0
    if kind is LearnerKind.MULTIPLICATIVE_WEIGHTS:
        # a deficit mu in average reward scales a weight by exp(-mu * s) at this
        # rate; ln(s)/s is the smallest slack of that form that bounds itself
        s = p["lr_scale"] * math.sqrt(t * math.log(n))
        if s <= math.e:
            return 1.0
        return min(1.0, p["mu_scale"] * math.log(s) / s)
    if kind is LearnerKind.FTPL:
        return min(1.0, p["mu_scale"] * (1.0 + math.log(t)) / math.sqrt(t))
    return min(1.0, p["eps_scale"] * t ** (-1.0 / 3.0))


def avg_reward(state, b):
    if state.t == 0:
        raise QueryBeforeFirstRound("no rounds observed yet")
    return float(state.cum_rewards[b] / state.t)


def round_rng(state, t):
    return np.random.default_rng([state.rng_seed, int(t)])


def action_probabilities(state, cum=None, t=None):
    """Distribution of the action for round t given cumulative rewards before it.

    Defaults to the next round. FTPL has no closed form and raises.
    """
    cum = state.cum_rewards if cum is None else cum
    t = state.t + 1 if t is None else t
    kind, n = state.kind, state.n
    if kind is LearnerKind.FICTITIOUS_PLAY:
        p = np.zeros(n)
        p[int(np.argmax(cum))] = 1.0
        return p
    if kind is LearnerKind.MULTIPLICATIVE_WEIGHTS:
        rate = state.params["lr_scale"] * math.sqrt(math.log(n) / t)
        z = rate * (cum - cum.max())
        w = np.exp(z)
        return w / w.sum()
    if kind is LearnerKind.EPSILON_GREEDY:
        eps = min(1.0, state.params["eps_scale"] * t ** (-1.0 / 3.0))
        p = np.full(n, eps / n)
        p[int(np.argmax(cum))] += 1.0 - eps
        return p
    raise NotImplementedError("FTPL is sampled directly")


def choose_action(state, cum=None, t=None):
    """Action for round t given the cumulative rewards before it; no state change."""
    cum = state.cum_rewards if cum is None else cum
    t = state.t + 1 if t is None else t
    kind = state.kind
    if kind is LearnerKind.FICTITIOUS_PLAY:
        return int(np.argmax(cum))
    rng = round_rng(state, t)
    if kind is LearnerKind.FTPL:
        noise = rng.exponential(state.params["noise_scale"] * math.sqrt(t), size=state.n)
        return int(np.argmax(cum + noise))
    if kind is LearnerKind.EPSILON_GREEDY:
        eps = min(1.0, state.params["eps_scale"] * t ** (-1.0 / 3.0))
        if rng.random() < eps:
            return int(rng.integers(state.n))
        return int(np.argmax(cum))
    p = action_probabilities(state, cum, t)
    return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), state.n - 1))


def observe(state, rewards, count=1):
    """Add `count` rounds of the per-action reward vector without choosing actions."""
    state.cum_rewards = state.cum_rewards + count * np.asarray(rewards, dtype=float)
    state.t += int(count)


def learner_step(state, game, x_t):
    if game.n != state.n:
        raise ValueError(f"learner has {state.n} actions, game has {game.n}")
    y = choose_action(state)
    observe(state, np.asarray(x_t, dtype=float) @ game.u2)
    return y
