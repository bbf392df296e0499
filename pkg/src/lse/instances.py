"""Game generators, fixtures with known geometry, and JSON persistence."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .game_core import GameInstance, InvalidArgument


class SpecInvalid(ValueError):
    pass


class UnknownFixture(KeyError):
    pass


class SchemaViolation(ValueError):
    pass


@dataclass(frozen=True)
class SmoothedSpec:
    base_u2: np.ndarray
    sigma: float
    seed: int = 0
    base_u1: np.ndarray = None
    clip: bool = False

    def __post_init__(self):
        if not self.sigma >= 0:
            raise SpecInvalid("sigma must be nonnegative")


def smoothed_perturb(spec):
    """Add i.i.d. N(0, sigma^2) noise to u2; u1 is kept (zeros if not given)."""
    base = np.asarray(spec.base_u2, dtype=float)
    u1 = np.zeros_like(base) if spec.base_u1 is None else np.asarray(spec.base_u1, dtype=float)
    rng = np.random.default_rng(spec.seed)
    u2 = base + spec.sigma * rng.standard_normal(base.shape)
    if spec.clip:
        u2 = np.clip(u2, 0.0, 1.0)
    extended = not spec.clip and bool(u2.min() < 0.0 or u2.max() > 1.0)
    meta = {"generator": "smoothed", "seed": int(spec.seed),
            "params": {"sigma": float(spec.sigma), "clip": bool(spec.clip)}}
    return GameInstance(u1, u2, extended_range=extended, meta=meta)


def random_smoothed_game(m, n, sigma, seed):
    """Uniform [0,1] base utilities (both players) with a smoothed agent matrix."""
    rng = np.random.default_rng([int(seed), 0x5EED])
    base_u1 = rng.random((m, n))
    base_u2 = rng.random((m, n))
    game = smoothed_perturb(SmoothedSpec(base_u2, sigma, seed, base_u1))
    meta = dict(game.meta, params={"m": m, "n": n, "sigma": float(sigma)})
    return GameInstance(game.u1, game.u2, game.extended_range, meta)


@dataclass(frozen=True)
class PathGameSpec:
    ell: int
    path: tuple = None
    n_principal: int = None
    seed: int = 0

    def principal_count(self):
        return self.ell ** 2 if self.n_principal is None else int(self.n_principal)


@dataclass(frozen=True)
class PathGame:
    game: GameInstance
    path: tuple
    actions: tuple = field(repr=False)

    def action_index(self, r, s, i):
        return self.actions.index((r, s, i))

    def edge_action(self, i):
        """Agent action owning the region around edge (v_i, v_{i+1}), 1-based i."""
        return self.action_index(self.path[i - 1], self.path[i], i)


def _resolve_path(spec, m):
    if spec.path is not None:
        path = tuple(int(v) for v in spec.path)
        if len(path) != spec.ell:
            raise SpecInvalid(f"path has {len(path)} vertices, expected {spec.ell}")
        if len(set(path)) != len(path):
            raise SpecInvalid("path vertices must be distinct")
        if any(not 0 <= v < m for v in path):
            raise SpecInvalid(f"path vertices must lie in [0, {m})")
        if path[0] != 0:
            raise SpecInvalid("path must start at principal action 0")
        return path
    rng = np.random.default_rng(spec.seed)
    rest = rng.permutation(np.arange(1, m))[: spec.ell - 1]
    return (0,) + tuple(int(v) for v in rest)


def lower_bound_game(spec):
    """Hidden-path game where the only approximate local optimum is the path's end.

    Principal actions are 0..m-1 (vertex v_1 is action 0). Agent action 0 is
    the default region; every other agent action is a triple (r, s, i). Only
    the triples (v_i, v_{i+1}, i) on the hidden path ever become best
    responses, on {x_{v_i} + x_{v_{i+1}} >= 0.9}.
    """
    ell = int(spec.ell)
    if ell < 2:
        raise SpecInvalid("path length must be at least 2")
    m = spec.principal_count()
    if m < ell:
        raise SpecInvalid(f"{m} principal actions cannot hold a path of length {ell}")
    path = _resolve_path(spec, m)
    on_path = {(path[i - 1], path[i], i) for i in range(1, ell)}
    actions = [None] + [(r, s, i) for r in range(m) for s in range(m) if s != r
                        for i in range(1, ell + 1)]
    n = len(actions)
    scale = 2 * ell + 1
    u1 = np.zeros((m, n))
    u2 = np.zeros((m, n))
    u1[path[0], 0] = 1.0 / scale
    for col, act in enumerate(actions[1:], start=1):
        r, s, i = act
        u1[:, col] = 2 * i / scale
        u1[s, col] = (1 + 2 * i) / scale
        u2[:, col] = -1.0
        if act in on_path:
            u2[[r, s], col] = 1.0 / 9.0
    meta = {"generator": "lower_bound", "seed": int(spec.seed),
            "params": {"ell": ell, "m": m}, "hidden": {"path": list(path)}}
    game = GameInstance(u1, u2, extended_range=True, meta=meta)
    return PathGame(game, path, tuple(actions))


def _crossing_2x2():
    return GameInstance([[0.0, 1.0], [1.0, 0.0]], [[0.9, 0.1], [0.2, 0.8]],
                        meta={"generator": "fixture", "name": "crossing_2x2"})


def _dominant():
    u1 = [[1.0, 0.2, 0.5], [0.0, 0.9, 0.1], [0.0, 0.3, 0.7]]
    u2 = [[0.9, 0.5, 0.1], [0.8, 0.2, 0.3], [0.7, 0.4, 0.6]]
    return GameInstance(u1, u2, meta={"generator": "fixture", "name": "dominant"})


def _tripoint_3():
    # equal column sums put all three pairwise boundaries through the barycenter
    u2 = [[0.7, 0.2, 0.3], [0.1, 0.6, 0.4], [0.4, 0.4, 0.5]]
    u1 = [[0.2, 0.5, 0.9], [0.6, 0.1, 0.3], [0.3, 0.8, 0.4]]
    return GameInstance(u1, u2, meta={"generator": "fixture", "name": "tripoint_3"})


FIXTURES = {
    "crossing_2x2": _crossing_2x2,
    "dominant": _dominant,
    "tripoint_3": _tripoint_3,
}


def analytic_fixture(name):
    try:
        return FIXTURES[name]()
    except KeyError:
        raise UnknownFixture(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None


def game_to_dict(game):
    return {
        "m": game.m,
        "n": game.n,
        "extended_range": bool(game.extended_range),
        "u1": game.u1.tolist(),
        "u2": game.u2.tolist(),
        "meta": _jsonable(game.meta),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def save_game(game, path):
    Path(path).write_text(json.dumps(game_to_dict(game), indent=1) + "\n")


def _check_matrix(name, rows, m, n, extended):
    if not isinstance(rows, list) or len(rows) != m:
        raise SchemaViolation(f"{name}: expected {m} rows")
    for a, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise SchemaViolation(f"{name}[{a}]: expected {n} columns")
        for b, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaViolation(f"{name}[{a}][{b}]: not a number")
            if not np.isfinite(v):
                raise SchemaViolation(f"{name}[{a}][{b}]: not finite")
            if not extended and not 0.0 <= v <= 1.0:
                raise SchemaViolation(f"{name}[{a}][{b}] = {v} outside [0, 1] without extended_range")


def game_from_dict(data):
    if not isinstance(data, dict):
        raise SchemaViolation("top level must be an object")
    for key in ("m", "n", "u1", "u2"):
        if key not in data:
            raise SchemaViolation(f"missing key {key!r}")
    m, n = data["m"], data["n"]
    if not isinstance(m, int) or not isinstance(n, int):
        raise SchemaViolation("m and n must be integers")
    extended = data.get("extended_range", False)
    if not isinstance(extended, bool):
        raise SchemaViolation("extended_range must be a boolean")
    _check_matrix("u1", data["u1"], m, n, extended)
    _check_matrix("u2", data["u2"], m, n, extended)
    try:
        return GameInstance(data["u1"], data["u2"], extended, data.get("meta", {}))
    except InvalidArgument as exc:
        raise SchemaViolation(str(exc)) from exc


def load_game(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON: {exc}") from exc
    return game_from_dict(data)

