"""Command-line interface.

    opdickman sample      --q "1,0;0,2" --nu usphere --n 500 --out x.csv
    opdickman verify      --q 1 --nu delta:w=1
    opdickman density1d   --theta 2 --xmax 10 --step 0.001 --out f.csv
    opdickman experiment  record-epochs|small-jumps|convolution|figures [flags]

Exit codes: 0 success, 1 a verification check failed, 2 usage or config error.
"""

import argparse
import csv
import json
import math
import os
import sys
import warnings

import numpy as np

from . import core, experiments, measures, verify
from .config import ConfigError, ExperimentConfig, default_seed, load
from .linalg import NotInMPlusError, format_matrix, parse_matrix, validate_mplus
from .univariate import density_table

EXPERIMENTS = ("record-epochs", "small-jumps", "convolution", "figures")
DEFAULT_N = {"sample": 1000, "verify": 100_000, "density1d": 0, "record-epochs": 2000,
             "small-jumps": 100_000, "convolution": 2000, "figures": 500}


def _add_common(p):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--dim", type=int)
    p.add_argument("--q", help='operator, rows split by ";" e.g. "1,0;0,2"')
    p.add_argument("--nu", help="amplitude law, e.g. usphere, delta:w=1,0, vonmises:mu=0,kappa=2")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--nmax", type=int)
    p.add_argument("--out")


def build_parser():
    parser = argparse.ArgumentParser(prog="opdickman", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw samples and write them as CSV")
    _add_common(p)

    p = sub.add_parser("verify", help="run the invariant checks for one distribution")
    _add_common(p)

    p = sub.add_parser("density1d", help="tabulate the one-dimensional Dickman density")
    p.add_argument("--config")
    p.add_argument("--theta", type=float)
    p.add_argument("--xmax", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--out")

    p = sub.add_parser("experiment", help="limit-theorem experiments and figure data")
    p.add_argument("name", choices=EXPERIMENTS)
    _add_common(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--eps-schedule", dest="eps_schedule")
    p.add_argument("--n-list", dest="n_list")
    p.add_argument("--k-list", dest="k_list")
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--reference", choices=("stated", "scaled"))
    return parser


def resolve_config(args):
    cfg = load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "name")}
    cfg.update(flags)
    if cfg.seed is None:
        cfg.seed = default_seed()
    cfg.experiment = getattr(args, "name", None) or args.command
    if cfg.n is None:
        cfg.n = DEFAULT_N[cfg.experiment]
    return cfg


def _operator(cfg, default_dim=1):
    dim = cfg.dim
    if cfg.q is not None:
        try:
            Q = parse_matrix(cfg.q)
        except ValueError as exc:
            raise ConfigError("q", str(exc)) from None
        if dim is not None and Q.shape[0] != dim:
            raise ConfigError("q", f"operator is {Q.shape[0]}x{Q.shape[0]} but dim={dim}")
        dim = Q.shape[0]
    else:
        dim = dim or default_dim
        Q = np.eye(dim)
    try:
        return validate_mplus(Q), dim
    except (NotInMPlusError, ValueError) as exc:
        raise ConfigError("q", str(exc)) from None


def _measure(text, dim, key="nu"):
    try:
        return measures.parse_measure(text, dim)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _default_nu(dim):
    return "delta:w=1" if dim == 1 else "usphere"


def _distribution(cfg):
    Q, dim = _operator(cfg)
    nu = _measure(cfg.nu or _default_nu(dim), dim)
    return core.DickmanDistribution(Q, nu)


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", newline="", encoding="utf-8"), True
    except OSError as exc:
        raise ConfigError("out", str(exc)) from None


def _num(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def write_csv(path, header, rows):
    fh, close = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])
    finally:
        if close:
            fh.close()


def _check_positive(cfg):
    if cfg.n < 0:
        raise ConfigError("n", "must be non-negative")
    if not cfg.eps > 0:
        raise ConfigError("eps", "must be positive")
    if cfg.nmax < 1:
        raise ConfigError("nmax", "must be at least 1")


def cmd_sample(cfg):
    _check_positive(cfg)
    dist = _distribution(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", core.TruncationWarning)
        batch = dist.sample(cfg.n, seed=cfg.seed, eps=cfg.eps, n_max=cfg.nmax)
    write_csv(cfg.out, [f"x{j + 1}" for j in range(dist.dim)], batch.data)
    diag = dict(n=len(batch), seed=cfg.seed, eps=cfg.eps, n_max=cfg.nmax,
                cap_hits=batch.cap_hits,
                mean_terms=float(batch.term_counts.mean()) if len(batch) else 0.0,
                max_terms=int(batch.term_counts.max()) if len(batch) else 0)
    print(json.dumps(diag), file=sys.stderr)
    return 0


def cmd_verify(cfg):
    _check_positive(cfg)
    dist = _distribution(cfg)
    records = verify.run_suite(dist, n=cfg.n, seed=cfg.seed, eps=cfg.eps, n_max=cfg.nmax)
    lines = [json.dumps(dict(r, q=format_matrix(dist.Q.entries), nu=dist.nu.spec())) for r in records]
    if cfg.out:
        try:
            with open(cfg.out, "a", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")
        except OSError as exc:
            raise ConfigError("out", str(exc)) from None
    for line in lines:
        print(line)
    failed = [r["check"] for r in records if not r["passed"]]
    if failed:
        print("verification failed: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def cmd_density1d(cfg):
    if not cfg.theta > 0:
        raise ConfigError("theta", "must be positive")
    if not 0 < cfg.xmax <= 50:
        raise ConfigError("xmax", "must lie in (0, 50]")
    N = round(1.0 / cfg.step) if cfg.step > 0 else 0
    if N < 4 or abs(N * cfg.step - 1) > 1e-9:
        raise ConfigError("step", "must be 1/N for an integer N >= 4")
    table = density_table(cfg.theta, cfg.step, math.ceil(cfg.xmax))
    x = table.grid
    x = x[x <= cfg.xmax + 1e-12]
    f = table.density(x)
    write_csv(cfg.out, ["x", "f_theta"], zip(x, f))
    return 0


def _experiment_rows(cfg):
    name = cfg.experiment
    if name == "record-epochs":
        if not 0 < cfg.alpha < 1:
            raise ConfigError("alpha", "must lie in (0, 1)")
        if min(cfg.n_list) < 1 or max(cfg.n_list) / cfg.alpha > 600:
            raise ConfigError("n_list", "values must lie in [1, 600 * alpha]")
        Q, dim = _operator(cfg)
        if not Q.decomposition.diagonalizable:
            raise ConfigError("q", "record-epoch experiment needs a diagonalizable operator")
        nu = _measure(cfg.nu or _default_nu(dim), dim)
        rows, summary = experiments.experiment_record_epochs(
            cfg.alpha, Q, nu, n_list=cfg.n_list, m_samples=cfg.n, seed=cfg.seed,
            eps=cfg.eps, n_max=cfg.nmax, reference=cfg.reference)
        return ["n", "seed", "energy_distance", "p_value"], rows, summary
    if name == "small-jumps":
        if any(not e > 0 for e in cfg.eps_schedule):
            raise ConfigError("eps_schedule", "every value must be positive")
        Q, dim = _operator(cfg, default_dim=2)
        sigma = _measure(cfg.nu or "usphere", dim)
        rows, summary = experiments.experiment_small_jumps(
            Q, sigma, eps_list=cfg.eps_schedule, n=cfg.n, seed=cfg.seed, trunc=cfg.eps)
        return ["eps", "seed", "cf_distance", "acceptance", "wedge_mc", "wedge_exact",
                "wedge_limit"], rows, summary
    if name == "convolution":
        Q, dim = _operator(cfg)
        specs = (cfg.nu or _default_nu(dim)).split("|")
        nus = [_measure(s, dim) for s in specs]
        try:
            c = experiments.geometric_schedule(cfg.k_max)
            experiments.check_schedule(c)
        except ValueError as exc:
            raise ConfigError("k_max", str(exc)) from None
        if max(cfg.k_list) > cfg.k_max:
            raise ConfigError("k_list", "values must not exceed k_max")
        rows, summary = experiments.experiment_countable_convolution(
            Q.entries, nus, c=c, K_list=cfg.k_list, n=cfg.n, seed=cfg.seed,
            eps=cfg.eps, n_max=cfg.nmax)
        return ["K", "seed", "energy_distance", "p_value"], rows, summary
    raise ConfigError("experiment", f"unknown experiment {name!r}")


def cmd_experiment(cfg):
    _check_positive(cfg)
    if cfg.experiment == "figures":
        return cmd_figures(cfg)
    header, rows, summary = _experiment_rows(cfg)
    write_csv(cfg.out, header, ([r[h] for h in header] for r in rows))
    print(json.dumps(dict(experiment=cfg.experiment, **summary)), file=sys.stderr)
    return 0


def cmd_figures(cfg):
    out_dir = cfg.out or "figures"
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigError("out", str(exc)) from None
    batches = experiments.figure_samples(n=cfg.n, seed=cfg.seed, eps=cfg.eps, n_max=cfg.nmax)
    for name, desc, x in batches:
        write_csv(os.path.join(out_dir, name + ".csv"),
                  [f"x{j + 1}" for j in range(x.shape[1])], x)
    checks = experiments.figure_checks(batches, seed=cfg.seed, eps=cfg.eps, n_max=cfg.nmax)
    with open(os.path.join(out_dir, "checks.json"), "w", encoding="utf-8") as fh:
        json.dump(checks, fh, indent=1)
    print(json.dumps(dict(experiment="figures", files=[b[0] for b in batches], **checks)),
          file=sys.stderr)
    return 0


COMMANDS = {
    "sample": cmd_sample,
    "verify": cmd_verify,
    "density1d": cmd_density1d,
    "experiment": cmd_experiment,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"opdickman: invalid {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
