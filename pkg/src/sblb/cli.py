"""Command line front end: ``sblb run | sweep | audit-ldp | solve-batch | report``.

Every flag mirrors a RunConfig field.  ``--config file.json`` supplies defaults
(keys use the long flag names with underscores); flags given on the command
line win.  Exit codes: 0 ok, 2 bad configuration, 3 infeasible batch length,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

from . import harness
from .env import EnvConfig
from .errors import ConfigError, ContractError, DomainError, InfeasibleError, NumericError
from .ldp import LdpConfig, audit_input_grid, compute_flip_probability, ldp_ratio_audit
from .shuffler import PrivacyTarget, batch_length_upper_bound, privacy_report, solve_batch_length

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4

# flag name -> (type, default); defaults also serve config-file validation
RUN_FIELDS = {
    "preset": (str, "manual"),
    "algorithm": (str, "sblb"),
    "epsilon0": (float, None),
    "epsilon": (float, None),
    "delta": (float, 0.1),
    "delta0": (float, 0.1),
    "m": (int, 1),
    "eta": (float, 0.5),
    "lam": (float, None),
    "batch_length": (int, None),
    "d": (int, 5),
    "K": (int, 10),
    "T": (int, 1000),
    "L": (float, 1.0),
    "S": (float, 1.0),
    "sigma": (float, 0.1),
    "margin": (float, 0.45),
    "theta_seed": (int, 0),
    "output_dir": (str, None),
    "workers": (int, 1),
}


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(float(part)))
    return out


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default values for any flag")
    for name, (typ, _) in RUN_FIELDS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    p.add_argument("--seeds", type=_int_list, default=None,
                   help="comma list or range, e.g. 0..19")


def _merged(args: argparse.Namespace) -> dict:
    values = {k: v for k, (_, v) in RUN_FIELDS.items()}
    values["seeds"] = [0]
    values["horizons"] = None
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        unknown = set(loaded) - set(values)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for k, v in vars(args).items():
        if v is not None and k in values:
            values[k] = v
    return values


def config_from_values(v: dict) -> harness.RunConfig:
    env = EnvConfig(d=v["d"], K=v["K"], T=v["T"], L=v["L"], S=v["S"], sigma=v["sigma"],
                    margin=v["margin"], theta_seed=v["theta_seed"])
    common = dict(algorithm=v["algorithm"], batch_length=v["batch_length"], seeds=v["seeds"],
                  output_dir=v["output_dir"], eta=v["eta"])
    preset = v["preset"]
    if preset == "ldp_optimized":
        if v["epsilon0"] is None:
            raise ConfigError("ldp_optimized preset needs --epsilon0")
        if v["lam"] is not None:
            common["lam"] = v["lam"]
        return harness.preset_ldp_optimized(v["epsilon0"], v["delta"], env, m=v["m"], **common)
    if preset == "regret_optimized":
        eps = v["epsilon"]
        if eps is None:
            eps = harness.regret_optimized_epsilon_max(env.T)
        if v["lam"] is not None:
            common["lam"] = v["lam"]
        return harness.preset_regret_optimized(eps, v["delta"], v["delta0"], env, **common)
    if preset != "manual":
        raise ConfigError(f"unknown preset {preset!r}")
    if v["epsilon0"] is None or v["epsilon"] is None:
        raise ConfigError("manual preset needs --epsilon0 and --epsilon")
    return harness.build_config(env, epsilon0=v["epsilon0"], epsilon=v["epsilon"],
                                delta0=v["delta0"], delta=v["delta"], m=v["m"],
                                lam=v["lam"] if v["lam"] is not None else 1.0, **common)


def _out_dir(v: dict) -> Path:
    return Path(v["output_dir"] or harness.default_output_dir())


def cmd_run(args) -> int:
    v = _merged(args)
    cfg = config_from_values(v)
    out = _out_dir(v)
    for res in harness.run_many(cfg, v["seeds"], v["workers"]):
        harness.export(res, out)
        priv = res.privacy
        eps_txt = "n/a" if priv is None or priv.epsilon_total is None else f"{priv.epsilon_total:.4g}"
        print(f"seed={res.seed} algorithm={res.algorithm} T={cfg.env.T} l*={res.l_star} "
              f"commits={res.num_commits} regret={res.final_regret:.4f} eps_total={eps_txt}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    v = _merged(args)
    horizons = v["horizons"] or [2 ** k for k in range(10, 14)]
    base = config_from_values({**v, "T": max(horizons)})
    values = dict(v)

    def make(T):
        return config_from_values({**values, "T": T}) if base.preset == "regret_optimized" \
            else base.with_horizon(T)

    out = harness.sweep(make, horizons, v["seeds"], v["workers"])
    path = _out_dir(v)
    path.mkdir(parents=True, exist_ok=True)
    (path / "sweep.json").write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    slope = out.get("slope")
    print(f"horizons={horizons} slope={'undefined' if slope is None else f'{slope:.4f}'} "
          f"-> {path / 'sweep.json'}")
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = LdpConfig(epsilon0=args.epsilon0, m=args.m, d=args.d, L=args.L)
    worst = ldp_ratio_audit(cfg, audit_input_grid(cfg, n_pairs=args.pairs, seed=args.seed))
    ok = worst <= cfg.epsilon0 + 1e-9
    print(json.dumps({"epsilon0": cfg.epsilon0, "p": cfg.p, "bits": cfg.n_bits,
                      "max_log_ratio": worst, "within_budget": ok}))
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_solve(args) -> int:
    if (args.p is None) == (args.epsilon0 is None):
        raise ConfigError("give exactly one of --p and --epsilon0")
    p = args.p if args.p is not None else compute_flip_probability(args.epsilon0, args.m, args.d)
    target = PrivacyTarget(epsilon=args.epsilon, delta0=args.delta0, delta=args.delta, T=args.T,
                           m=args.m, d=args.d, p=p)
    l_star = solve_batch_length(target)
    eps0 = args.epsilon0 if args.epsilon0 is not None else \
        args.m * args.d * (args.d + 3) / 2 * math.log(2 / p - 1)
    report = privacy_report(target, l_star, eps0).to_dict()
    report["upper_bound"] = batch_length_upper_bound(target)
    report["p"] = p
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    paths = []
    for item in args.paths:
        p = Path(item)
        paths.extend(sorted(p.glob("summary_*.json")) if p.is_dir() else [p])
    if not paths:
        raise ConfigError("no summary files found")
    summaries = [json.loads(p.read_text()) for p in paths]
    finals = [s["final_regret"] for s in summaries]
    stats = harness.summarize_regret(finals) if len(finals) > 1 else {"mean": finals[0], "n": 1}
    print(json.dumps({"runs": len(summaries), "regret": stats,
                      "privacy": summaries[0].get("privacy"),
                      "max_commits": max(s["num_commits"] for s in summaries)}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sblb", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one configuration over the given seeds")
    _add_run_flags(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="horizon grid x seeds, writes sweep.json")
    _add_run_flags(sw)
    sw.add_argument("--horizons", type=_int_list, default=None)
    sw.set_defaults(func=cmd_sweep)

    au = sub.add_parser("audit-ldp", help="exact likelihood-ratio audit of the local randomizer")
    au.add_argument("--epsilon0", type=float, required=True)
    au.add_argument("--d", type=int, default=1)
    au.add_argument("--m", type=int, default=1)
    au.add_argument("--L", type=float, default=1.0)
    au.add_argument("--pairs", type=int, default=10)
    au.add_argument("--seed", type=int, default=0)
    au.set_defaults(func=cmd_audit)

    so = sub.add_parser("solve-batch", help="smallest privacy-feasible shuffler batch length")
    so.add_argument("--epsilon", type=float, required=True)
    so.add_argument("--delta0", type=float, default=0.1)
    so.add_argument("--delta", type=float, default=0.1)
    so.add_argument("--T", type=int, required=True)
    so.add_argument("--d", type=int, default=5)
    so.add_argument("--m", type=int, default=1)
    so.add_argument("--p", type=float, default=None)
    so.add_argument("--epsilon0", type=float, default=None)
    so.set_defaults(func=cmd_solve)

    rep = sub.add_parser("report", help="summarize summary_<seed>.json files")
    rep.add_argument("paths", nargs="+")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ContractError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
