"""Stage game: utility matrices, mixed strategies and exact best responses."""

from dataclasses import dataclass, field

import numpy as np

DEFAULT_TIE_TOL = 1e-9
_NORMALIZE_TOL = 1e-9


class InvalidArgument(ValueError):
    pass


def mixed_strategy(weights, normalize_tol=_NORMALIZE_TOL):
    """Validate a probability vector and return it as a read-only float array.

    Sums within `normalize_tol` of one are renormalized; anything further off
    is rejected.
    """
    w = np.array(weights, dtype=float).reshape(-1)
    if w.size < 1 or not np.all(np.isfinite(w)):
        raise InvalidArgument("strategy must be a nonempty finite vector")
    if np.any(w < -1e-12):
        raise InvalidArgument(f"negative weight {w.min():.3g}")
    w = np.clip(w, 0.0, None)
    s = w.sum()
    if abs(s - 1.0) > normalize_tol:
        raise InvalidArgument(f"weights sum to {s!r}, not 1")
    if s != 1.0:
        w = w / s
    w.flags.writeable = False
    return w


@dataclass(frozen=True)
class GameInstance:
    u1: np.ndarray
    u2: np.ndarray
    extended_range: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        u1 = np.array(self.u1, dtype=float)
        u2 = np.array(self.u2, dtype=float)
        if u1.ndim != 2 or u1.shape != u2.shape:
            raise InvalidArgument(f"u1 {u1.shape} and u2 {u2.shape} must be equal m x n")
        m, n = u1.shape
        if m < 2 or n < 2:
            raise InvalidArgument(f"need m >= 2 and n >= 2, got {m} x {n}")
        for name, u in (("u1", u1), ("u2", u2)):
            if not np.all(np.isfinite(u)):
                raise InvalidArgument(f"{name} has non-finite entries")
            # extended instances (lower-bound game, unclipped perturbations) only need finiteness
            if not self.extended_range and (u.min() < 0.0 or u.max() > 1.0):
                raise InvalidArgument(f"{name} entries must lie in [0, 1] unless extended_range is set")
        u1.flags.writeable = False
        u2.flags.writeable = False
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)

    @property
    def m(self):
        return self.u1.shape[0]

    @property
    def n(self):
        return self.u1.shape[1]

    @property
    def utility_range(self):
        if not self.extended_range:
            return (0.0, 1.0)
        return (float(min(self.u1.min(), self.u2.min())), float(max(self.u1.max(), self.u2.max())))


@dataclass(frozen=True)
class BestResponseSet:
    actions: tuple
    margin: float

    def __contains__(self, b):
        return b in self.actions

    @property
    def lowest(self):
        return self.actions[0]


def _as_agent_vector(game, y):
    if isinstance(y, (int, np.integer)):
        if not 0 <= y < game.n:
            raise InvalidArgument(f"agent action {y} out of range for n={game.n}")
        return None
    v = np.asarray(y, dtype=float).reshape(-1)
    if v.size != game.n:
        raise InvalidArgument(f"agent strategy has length {v.size}, expected {game.n}")
    return v


def expected_utility(game, x, y, player="principal"):
    """x^T U_i y for a principal mixed strategy x and an agent action or mix y."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != game.m:
        raise InvalidArgument(f"principal strategy has length {x.size}, expected {game.m}")
    if player == "principal":
        u = game.u1
    elif player == "agent":
        u = game.u2
    else:
        raise InvalidArgument(f"unknown player {player!r}")
    v = _as_agent_vector(game, y)
    if v is None:
        return float(x @ u[:, y])
    return float(x @ u @ v)


def agent_scores(game, x):
    return np.asarray(x, dtype=float) @ game.u2


def best_response_set(game, x, tie_tol=DEFAULT_TIE_TOL):
    if tie_tol < 0:
        raise InvalidArgument("tie_tol must be nonnegative")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != game.m:
        raise InvalidArgument(f"principal strategy has length {x.size}, expected {game.m}")
    scores = x @ game.u2
    top = scores.max()
    inside = scores >= top - tie_tol
    actions = tuple(int(b) for b in np.flatnonzero(inside))
    rest = scores[~inside]
    margin = float(top - rest.max()) if rest.size else float("inf")
    return BestResponseSet(actions, margin)


def lowest_best_response(game, x):
    return int(np.argmax(np.asarray(x, dtype=float) @ game.u2))
