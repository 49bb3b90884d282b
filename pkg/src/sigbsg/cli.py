"""Command-line front end.

Exit status is 0 on success, 1 when the input is invalid and 2 when a solver
or simulation fails; failures also print a JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
import tempfile
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import lp
from .equilibrium import _AtlasEvaluator, solve_bse, solve_eps_sigbse, solve_sig_lp
from .fixtures import example_beliefs
from .game import Game, GameError, load_game, running_example
from .geometry import (
    EmptyPolytopeError,
    EnumerationCapError,
    build_belief_atlas,
    enumerate_vertices,
    partition_polytope,
    strict_feasible_point,
)
from .learning import (
    SimulationConfig,
    SimulationError,
    build_arm_set,
    compute_metrics,
    simulate,
    trace_csv,
)
from .signaling import leader_objective, optimal_report

OPT_EPSILON = 1e-6

SCHEMAS = {
    "game.schema.json": "input game (--game)",
    "result.schema.json": "solve output",
    "summary.schema.json": "simulate summary",
    "inspect.schema.json": "inspect output",
    "error.schema.json": "error object printed on stderr",
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# serialisation


def _plain(obj):
    """Convert numpy containers and scalars to plain Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        # 17 significant digits round-trip exactly; non-finite values have no JSON form
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    return json.dumps(obj)


def dumps(obj, indent: int = 2) -> str:
    return _encode(_plain(obj), indent, 0) + "\n"


def _schema(name: str) -> dict:
    return json.loads(resources.files("sigbsg.schemas").joinpath(name).read_text())


def validate_output(doc, schema_name: str) -> None:
    jsonschema.validate(json.loads(dumps(doc)), _schema(schema_name))


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def _game(args) -> Game:
    if args.game is None:
        return running_example()
    path = Path(args.game)
    if not path.is_file():
        raise GameError(f"game file {str(path)!r} not found")
    return load_game(path)


def cmd_solve(args) -> int:
    game = _game(args)
    if args.mode == "bse":
        res = solve_bse(game)
    elif args.mode == "iclp":
        res = solve_sig_lp(game)
    else:
        res = solve_eps_sigbse(game, args.eps)
    doc = res.to_json(game)
    validate_output(doc, "result.schema.json")
    _emit(dumps(doc), args.out)
    return 0


def _stat(values) -> dict:
    a = np.asarray(values, dtype=float)
    return {"mean": float(a.mean()), "std": float(a.std())}


def cmd_simulate(args) -> int:
    game = _game(args)
    opt = solve_eps_sigbse(game, OPT_EPSILON).value
    arms = build_arm_set(game)
    runs = []
    eta = None
    for r in range(args.replicates):
        seed = args.seed + r
        cfg = SimulationConfig(args.rounds, seed, args.algo, args.eta, args.resolve_period)
        trace = simulate(game, game.prior, cfg, arms=arms)
        m = compute_metrics(trace, opt, arms)
        if r == 0 and args.trace:
            atomic_write(args.trace, trace_csv(trace, m))
        per = m.per_round()
        eta = trace.info.get("eta", eta)
        details = {k: v for k, v in trace.info.items() if k in ("lp_solves", "weight_drift")}
        runs.append(
            {
                "seed": seed,
                "avg_payoff": m.avg_payoff,
                "gap": m.gap,
                "regret": m.regret,
                "gap_per_round": per["gap"],
                "regret_per_round": per["regret"],
                "details": details,
            }
        )
    doc = {
        "algorithm": args.algo,
        "rounds": args.rounds,
        "eta": eta,
        "resolve_period": args.resolve_period,
        "opt_value": opt,
        "arms": len(arms),
        "runs": runs,
        "aggregate": {key: _stat([run[key] for run in runs]) for key in ("avg_payoff", "gap", "regret")},
    }
    validate_output(doc, "summary.schema.json")
    _emit(dumps(doc), args.out)
    return 0


def cmd_inspect(args) -> int:
    game = _game(args)
    atlas = build_belief_atlas(game)
    ev = _AtlasEvaluator(game, atlas)
    pieces = []
    for gamma in itertools.product(range(game.K), repeat=game.K):
        Q = partition_polytope(game, atlas, gamma, ev.fvals)
        verts = enumerate_vertices(Q)
        feasible = False
        sup = None
        if verts.shape[0]:
            try:
                feasible = strict_feasible_point(Q) is not None
            except EmptyPolytopeError:
                feasible = False
            sol = lp.maximize(ev.piece_gradient(gamma), Q.A, Q.c, bounds=(None, None))
            sup = None if sol is None else sol.value
        pieces.append(
            {
                "gamma": list(gamma),
                "closure_vertices": int(verts.shape[0]),
                "strictly_feasible": bool(feasible),
                "closure_sup": sup,
            }
        )
    doc = {
        "game": {
            "leader_actions": list(game.leader_actions),
            "follower_actions": list(game.follower_actions),
            "types": list(game.type_names),
            "prior": game.prior.tolist(),
        },
        "atlas": atlas.to_json(),
        "pieces": pieces,
    }
    validate_output(doc, "inspect.schema.json")
    _emit(dumps(doc), args.out)
    return 0


def cmd_example(args) -> int:
    game = running_example()
    pi = example_beliefs()
    bse = solve_bse(game).value
    truthful = leader_objective(game, pi, truthful=True)
    deceived = leader_objective(game, pi)
    report = game.type_names[optimal_report(game, pi, 1)]
    iclp = solve_sig_lp(game).value
    eps = solve_eps_sigbse(game, args.eps).value
    rows = [
        ("bse value", bse, "published 0.55"),
        ("signaling value, truthful reports", truthful, "published 0.8625"),
        ("signaling value, optimal reports", deceived, "derived 0.525"),
        ("incentive-compatible LP value", iclp, "computed"),
        (f"eps-optimal value (eps={args.eps:g})", eps, "computed"),
    ]
    lines = [
        "market entry: 3 leader actions, follower types theta1 (0.55) and theta2 (0.45)",
        "commitment: x = (0, 1/2, 1/2); theta1 sees (0, 2/3, 1/3) w.p. 3/4 and (0, 0, 1) w.p. 1/4; theta2 sees nothing",
        "",
    ]
    width = max(len(r[0]) for r in rows)
    for label, value, source in rows:
        lines.append(f"{label:<{width}}  {format(value, '.17g'):<20}  [{source}]")
    lines.append(f"{'report chosen by theta2':<{width}}  {report:<20}  [published theta1]")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def build_parser() -> argparse.ArgumentParser:
    epilog = "JSON schemas shipped in sigbsg/schemas:\n" + "\n".join(
        f"  {name:<22} {what}" for name, what in SCHEMAS.items()
    )
    epilog += "\n\nexit status: 0 success, 1 invalid input, 2 solver failure"
    parser = _Parser(
        prog="sigbsg",
        description="Solve and simulate signaling Bayesian Stackelberg games.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, game=True):
        if game:
            p.add_argument("--game", metavar="PATH", help="game JSON (default: bundled market-entry example)")
        p.add_argument("--out", metavar="PATH", help="write output here instead of stdout")

    p = sub.add_parser("solve", help="compute an equilibrium commitment", epilog=epilog,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--mode", choices=("bse", "iclp", "eps"), default="eps")
    p.add_argument("--eps", type=_positive_float, default=1e-3, metavar="F")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="run a learning leader against myopic followers", epilog=epilog,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--algo", choices=("ftl-ic", "hedge"), default="ftl-ic")
    p.add_argument("--rounds", type=_positive_int, default=1000, metavar="N")
    p.add_argument("--seed", type=_seed, default=0, metavar="U64")
    p.add_argument("--eta", type=_positive_float, default=None, metavar="F",
                   help="hedge learning rate (default sqrt(8 ln A / T))")
    p.add_argument("--resolve-period", type=_positive_int, default=1, metavar="N",
                   help="re-solve the commitment every N rounds")
    p.add_argument("--replicates", type=_positive_int, default=1, metavar="N",
                   help="runs with seeds seed, seed+1, ...; the trace is the first run")
    p.add_argument("--trace", metavar="PATH", help="per-round CSV trace")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("inspect", help="dump the belief atlas and partition pieces", epilog=epilog,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("example", help="reproduce the market-entry worked example")
    common(p, game=False)
    p.add_argument("--eps", type=_positive_float, default=1e-3, metavar="F")
    p.set_defaults(func=cmd_example)
    return parser


def _fail(kind: str, exc: BaseException, code: int) -> int:
    err = {"error": {"kind": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("validation", exc, 1)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (lp.LPError, SimulationError, EnumerationCapError, EmptyPolytopeError, RuntimeError) as exc:
        return _fail("solver", exc, 2)
    except jsonschema.ValidationError as exc:  # our own output failed its schema
        return _fail("solver", exc, 2)
    except (GameError, ValueError, OSError) as exc:
        return _fail("validation", exc, 1)


if __name__ == "__main__":
    sys.exit(main())
