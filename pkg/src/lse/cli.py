"""Command line: `lse run | verify | sweep | gen`."""

import argparse
import csv
import json
import math
import os
import statistics
import sys
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import instances as inst
from .interaction import DEFAULT_GAMMA, new_session, write_transcript
from .lse_driver import ConfigError, LseConfig, find_lse
from .verify import (certify_lse, check_singular_assumption, enumerate_polytopes,
                     exact_stackelberg)

CSV_COLUMNS = ["m", "n", "eps", "delta", "seed", "rounds_total", "rounds_improving",
               "rounds_other", "certified", "u1_final", "u1_exact_opt"]
CELL_COLUMNS = ["m", "n", "eps", "delta", "runs", "median_rounds_total", "certification_rate"]
TRANSCRIPT_LIMIT = 10**6


class UsageError(Exception):
    pass


def dumps(obj, indent=0):
    """Deterministic JSON with floats at 17 significant digits."""
    pad = " " * (indent + 2)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 2)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + " " * indent + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 2) for v in obj) + "\n" + " " * indent + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return format(v, ".17g")
        return json.dumps(str(v))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _seed(args):
    env = os.environ.get("LSE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"LSE_SEED={env!r} is not an integer") from None
    return args.seed


def _add_game_source(p):
    g = p.add_argument_group("game source (pick one)")
    g.add_argument("--fixture", help=f"one of {', '.join(sorted(inst.FIXTURES))}")
    g.add_argument("--file", help="game JSON file")
    g.add_argument("--smoothed", nargs=3, metavar=("M", "N", "SIGMA"),
                   help="uniform base game with Gaussian-perturbed agent utilities")
    g.add_argument("--lowerbound", type=int, metavar="ELL", help="hidden-path game of length ELL")
    g.add_argument("--principal", type=int, help="principal action count for --lowerbound")


def _load_source(args, seed):
    chosen = [name for name in ("fixture", "file", "smoothed", "lowerbound")
              if getattr(args, name) is not None]
    if len(chosen) != 1:
        raise UsageError("give exactly one game source: --fixture, --file, --smoothed or --lowerbound")
    if args.fixture is not None:
        try:
            return inst.analytic_fixture(args.fixture), None
        except inst.UnknownFixture as exc:
            raise UsageError(str(exc.args[0])) from None
    if args.file is not None:
        return inst.load_game(args.file), None
    if args.smoothed is not None:
        m, n, sigma = int(args.smoothed[0]), int(args.smoothed[1]), float(args.smoothed[2])
        return inst.random_smoothed_game(m, n, sigma, seed), None
    pg = inst.lower_bound_game(inst.PathGameSpec(args.lowerbound, n_principal=args.principal,
                                                 seed=seed))
    return pg.game, pg


def _add_lse_params(p):
    p.add_argument("--learner", default="fp", help="fp, mw, ftpl or egreedy")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="played interior floor")
    p.add_argument("--sigma-lb", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)


def _lse_config(args):
    return LseConfig(args.eps, args.delta, alpha=args.alpha, sigma_lb=args.sigma_lb)


def cmd_run(args):
    seed = _seed(args)
    game, _ = _load_source(args, seed)
    session = new_session(game, args.learner, seed=seed, gamma=args.gamma)
    result = find_lse(session, args.eps, args.delta, config=_lse_config(args))
    payload = result.to_dict()
    payload["seed"] = seed
    payload["learner"] = args.learner
    payload["eps2_note"] = "eps2 defaults to eps*delta"
    text = dumps(payload) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(text)
        if args.transcript:
            _write_transcript(session, out / "transcript.jsonl", args.transcript_limit)
    else:
        sys.stdout.write(text)
    u1 = float(result.x_star @ game.u1[:, result.b_star])
    print(f"status={result.status} b*={result.b_star} u1={u1:.6f} "
          f"rounds={result.rounds_total} improving={result.rounds_improving}", file=sys.stderr)
    if args.require_certified and not result.certified:
        return 1
    return 0


def _write_transcript(session, path, limit):
    with open(path, "w") as fh:
        if session.t <= limit:
            write_transcript(session, fh)
            return
        write_transcript(_Truncated(session, limit), fh)
    print(f"transcript truncated to the first {limit} of {session.t} rounds", file=sys.stderr)


class _Truncated:
    """Session view exposing only the first `limit` rounds of history."""

    def __init__(self, session, limit):
        self.game = session.game
        self.learner = session.learner
        self.history = []
        used = 0
        for run in session.history:
            if used >= limit:
                break
            self.history.append(run if used + run.count <= limit else _cut(run, limit - used))
            used += self.history[-1].count


def _cut(run, count):
    return replace(run, count=count)


def _parse_point(spec, game, path_game):
    if spec.startswith("vertex:"):
        key = spec.split(":", 1)[1]
        if key == "v_ell":
            if path_game is None:
                raise UsageError("vertex:v_ell needs a --lowerbound game")
            a = path_game.path[-1]
        else:
            a = int(key)
        x = np.zeros(game.m)
        x[a] = 1.0
        return x
    p = Path(spec)
    data = json.loads(p.read_text()) if p.exists() else json.loads(spec)
    if isinstance(data, dict):
        data = data.get("x_star", data.get("x"))
    return np.asarray(data, dtype=float)


def cmd_verify(args):
    seed = _seed(args)
    game, path_game = _load_source(args, seed)
    report = {"m": game.m, "n": game.n}
    if args.enumerate or args.stackelberg:
        catalog = enumerate_polytopes(game)
        if args.enumerate:
            report["polytopes"] = [
                {"action": p.action, "nonempty": p.nonempty, "value": p.value,
                 "witness_floor": p.witness_floor, "interior_margin": p.interior_margin}
                for p in catalog.polytopes]
            report["r_min"] = catalog.r_min
        if args.stackelberg:
            value, x, b = exact_stackelberg(game, catalog)
            report["stackelberg"] = {"value": value, "x": list(x), "b": b}
    code = 0
    if args.certify:
        x = _parse_point(args.certify, game, path_game)
        cert = certify_lse(game, x, args.eps, args.delta)
        entry = {"x": list(x), "eps": args.eps, "delta": args.delta,
                 "certified": cert.certified, "base": cert.base}
        if cert.witness is not None:
            b, point, value = cert.witness
            entry["witness"] = {"action": b, "x": list(point), "value": value}
        report["certify"] = entry
        code = 0 if cert.certified else 1
    if args.singular:
        rep = check_singular_assumption(game, args.sigma_lb, args.budget, seed)
        report["singular"] = {"min_value": rep.min_value, "exhaustive": rep.exhaustive,
                              "checked": rep.checked, "sigma_lb": rep.sigma_lb,
                              "satisfied": rep.satisfied}
    if len(report) == 2:
        raise UsageError("nothing to verify: pass --enumerate, --stackelberg, --certify or --singular")
    text = dumps(report) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def sweep_cell(task):
    """One (game, eps, delta, seed) run; top-level so worker processes can pickle it."""
    kind, size, eps, delta, seed, sigma, principal, gamma, game_seed = task
    game_seed = seed if game_seed is None else game_seed
    if kind == "smoothed":
        m, n = size
        game = inst.random_smoothed_game(m, n, sigma, game_seed)
    else:
        game = inst.lower_bound_game(inst.PathGameSpec(size, n_principal=principal,
                                                       seed=game_seed)).game
    session = new_session(game, "fp", seed=seed, gamma=gamma)
    result = find_lse(session, eps, delta)
    u1_opt = exact_stackelberg(game)[0] if game.m <= 16 and game.n <= 64 else float("nan")
    return {
        "m": game.m, "n": game.n, "eps": eps, "delta": delta, "seed": seed,
        "rounds_total": result.rounds_total, "rounds_improving": result.rounds_improving,
        "rounds_other": result.rounds_other, "certified": int(result.certified),
        "u1_final": float(result.x_star @ game.u1[:, result.b_star]), "u1_exact_opt": u1_opt,
    }


def sweep_tasks(args):
    eps_list, delta_list = _floats(args.eps), _floats(args.delta)
    seeds = list(range(args.seeds)) if args.seed_list is None else _ints(args.seed_list)
    if args.ell:
        sizes = [("lowerbound", ell) for ell in _ints(args.ell)]
    else:
        ms = _ints(args.m)
        ns = _ints(args.n) if args.n else ms
        if len(ns) == 1:
            ns = ns * len(ms)
        if len(ns) != len(ms):
            raise UsageError("--n needs one value or one per --m value")
        sizes = [("smoothed", (m, n)) for m, n in zip(ms, ns)]
    tasks = [(kind, size, e, d, s, args.sigma, args.principal, args.gamma, args.game_seed)
             for kind, size in sizes for e in eps_list for d in delta_list for s in seeds]
    if not tasks:
        raise UsageError("empty sweep grid")
    return tasks


def _fmt9(v):
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


def cmd_sweep(args):
    tasks = sweep_tasks(args)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(sweep_cell, tasks))
    else:
        rows = [sweep_cell(t) for t in tasks]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt9(row[c]) for c in CSV_COLUMNS])
    cells = {}
    for row in rows:
        cells.setdefault((row["m"], row["n"], row["eps"], row["delta"]), []).append(row)
    cell_path = out.with_name(out.stem + "_cells.csv")
    with open(cell_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CELL_COLUMNS)
        for key, group in cells.items():
            med = statistics.median(r["rounds_total"] for r in group)
            rate = sum(r["certified"] for r in group) / len(group)
            w.writerow([_fmt9(v) for v in (*key, len(group), float(med), rate)])
    for key, group in cells.items():
        med = statistics.median(r["rounds_total"] for r in group)
        print(f"m={key[0]} n={key[1]} eps={key[2]:g} delta={key[3]:g} "
              f"median_rounds={med:.6g} certified={sum(r['certified'] for r in group)}/{len(group)}",
              file=sys.stderr)
    return 0


def cmd_gen(args):
    seed = _seed(args)
    game, _ = _load_source(args, seed)
    if args.out:
        inst.save_game(game, args.out)
    else:
        sys.stdout.write(json.dumps(inst.game_to_dict(game), indent=1) + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="lse", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the local Stackelberg search on one game")
    _add_game_source(run)
    _add_lse_params(run)
    run.add_argument("--out", help="output directory for result.json (stdout if omitted)")
    run.add_argument("--transcript", action="store_true", help="also write transcript.jsonl")
    run.add_argument("--transcript-limit", type=int, default=TRANSCRIPT_LIMIT)
    run.add_argument("--require-certified", action="store_true")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="exact checks on a game")
    _add_game_source(ver)
    ver.add_argument("--enumerate", action="store_true")
    ver.add_argument("--stackelberg", action="store_true")
    ver.add_argument("--certify", metavar="POINT",
                     help="JSON file or list with the point, or vertex:K / vertex:v_ell")
    ver.add_argument("--eps", type=float, default=0.1)
    ver.add_argument("--delta", type=float, default=0.05)
    ver.add_argument("--singular", action="store_true")
    ver.add_argument("--sigma-lb", type=float, default=1e-4)
    ver.add_argument("--budget", type=int, default=200_000)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--out")
    ver.set_defaults(func=cmd_verify)

    sw = sub.add_parser("sweep", help="grid of runs written to CSV")
    sw.add_argument("--m", default="3", help="comma list of principal action counts")
    sw.add_argument("--n", help="comma list of agent action counts (default: equal to m)")
    sw.add_argument("--ell", help="comma list of path lengths (lower-bound games)")
    sw.add_argument("--principal", type=int, help="principal action count for --ell")
    sw.add_argument("--sigma", type=float, default=0.05)
    sw.add_argument("--eps", default="0.1")
    sw.add_argument("--delta", default="0.05")
    sw.add_argument("--seeds", type=int, default=5, help="use seeds 0..N-1")
    sw.add_argument("--seed-list", help="explicit comma list of seeds")
    sw.add_argument("--game-seed", type=int,
                    help="fix the game to this seed; run seeds then vary only the session")
    sw.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", required=True, help="CSV path")
    sw.set_defaults(func=cmd_sweep)

    gen = sub.add_parser("gen", help="write a game JSON file")
    _add_game_source(gen)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out")
    gen.set_defaults(func=cmd_gen)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, inst.SchemaViolation, ConfigError, ValueError) as exc:
        print(f"lse {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
