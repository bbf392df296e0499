"""Optimize the principal's utility inside one best-response polytope.

The optimizer only knows the boundaries it has run into. It maximizes over
its current estimate, walks the running average toward the LP optimum, and
whenever the agent's response flips it locates the boundary, learns the
separating hyperplanes nearby and tightens the estimate by a margin.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .interaction import (advance_toward, binary_search_boundary, drive_average_to,
                          phase)
from .poly_search import SearchConfig, run_search


def closeness_slack(alpha, m, sigma_lb, gamma, r_min=None):
    """Loss from margin-shrinking and the floor: 2am/(s - a sqrt m) + 2g/R_min."""
    denom = sigma_lb - alpha * math.sqrt(m)
    margin_part = 2 * alpha * m / denom if denom > 0 else math.inf
    floor_part = math.inf if not r_min else 2 * gamma / r_min
    return margin_part + floor_part


@dataclass
class PolytopeSearchState:
    action: int
    estimated: geo.HalfspaceSet
    x_current: np.ndarray
    slack: float
    discovered: list = field(default_factory=list)
    improvement_log: list = field(default_factory=list)
    searches: list = field(default_factory=list)
    events: int = 0
    empty: bool = False
    stalled: bool = False

    def improvement_steps(self):
        """Arrays (t, u1_before, u1_after) over every improvement round."""
        parts = [run.step_arrays() for run in self.improvement_log]
        if not parts:
            return np.zeros(0, int), np.zeros(0), np.zeros(0)
        return tuple(np.concatenate(col) for col in zip(*parts))

    def min_scaled_gain(self):
        return min((run.min_scaled_gain() for run in self.improvement_log), default=math.inf)

    @property
    def known_actions(self):
        return {h.outside_action for h in self.discovered}


def optimize_within_polytope(session, b, x_start, eps, delta, alpha, gamma,
                             sigma_lb=1e-2, r_min=None, search_config=None,
                             estimated=None, max_events=None, search_retries=2):
    """Drive the average to an eps*delta-optimal point of P_b; returns (x_star, state).

    `gamma` is the floor of the estimated region and must exceed the session's
    played floor, otherwise drives onto the region's floor never finish.
    """
    game = session.game
    if gamma <= session.gamma:
        raise ValueError(f"region floor {gamma} must exceed the played floor {session.gamma}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    threshold = eps * delta
    cfg = search_config or SearchConfig(sigma_lb=sigma_lb)
    region = estimated or geo.HalfspaceSet(game.m, floor=gamma)
    col = game.u1[:, b]
    state = PolytopeSearchState(b, region, np.asarray(x_start, dtype=float),
                                closeness_slack(alpha, game.m, sigma_lb, gamma, r_min))
    max_events = game.n - 1 + search_retries if max_events is None else max_events
    drive_average_to(session, state.x_current)
    while True:
        target = geo.lp_maximize(col, state.estimated)
        if target is geo.Infeasible:
            state.empty = True
            break
        if float(target @ col) - float(session.avg @ col) < threshold:
            break
        with phase(session, "improving"):
            run = advance_toward(session, target, b, threshold)
        state.improvement_log.append(run)
        if run.converged:
            continue
        if state.events >= max_events:
            state.stalled = True
            drive_average_to(session, run.x_left)
            break
        state.events += 1
        with phase(session, "boundary"):
            found = binary_search_boundary(session, run.x_left, run.x_right, alpha,
                                           b_left=b, b_right=run.b_right)
        space = run_search(session, found.x_near, alpha, 0.5 * alpha, b=b, config=cfg)
        state.searches.append(space)
        fresh = [(h, a) for h, a in zip(space.discovered, space.actions)
                 if a not in state.known_actions]
        for h, a in fresh:
            state.estimated = state.estimated.with_constraint(h.normal, alpha, label=a)
            state.discovered.append(h)
        back = geo.project_onto_region(found.x_near, state.estimated)
        if back is None:
            state.empty = True
            drive_average_to(session, found.x_near)
            break
        drive_average_to(session, back)
    state.x_current = session.avg.copy()
    return state.x_current, state
