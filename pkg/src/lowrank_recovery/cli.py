"""Command-line experiment harness.

Each subcommand runs one seeded experiment and writes ``manifest.json`` plus
its CSV/JSON artifacts into ``--out``. The same configuration always yields
byte-identical CSV files. Exit status is 0 on success, 1 on usage errors and
2 on numerical failures; on any failure the files written so far are removed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, csvio
from . import concentration_mat as cm
from . import linalg_core, nets, prob_core, recovery, sensing
from .rng import RngStream

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Configuration


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(conv):
    def parse(x):
        return None if x is None else conv(x)
    parse.__name__ = conv.__name__
    return parse


# subcommand -> {param: (parser, default, help)}
PARAMS: dict[str, dict[str, tuple]] = {
    "caratheodory": {
        "points": (_opt(str), None, "point CSV; default: simplex vertices in R^dim"),
        "dim": (int, 10, "dimension of the default simplex"),
        "n_points": (int, 100, "number of sampled points N"),
    },
    "montecarlo": {
        "function": (str, "square", "integrand on [0,1]: square, sine or exp"),
        "n": (int, 1000, "sample size per estimate"),
    },
    "chi2-tails": {
        "m": (int, 50, "degrees of freedom"),
        "eps": (_floats, [0.2, 0.5], "comma-separated deviations"),
    },
    "jl": {
        "points": (_opt(str), None, "point CSV; default: random Gaussian points"),
        "n_points": (int, 20, "number of random points when no CSV is given"),
        "dim": (int, 500, "dimension of random points"),
        "eps": (float, 0.5, "target distortion"),
        "m": (_opt(int), None, "embedding dimension; default factor * minimal"),
        "factor": (float, 1.0, "multiplier on the minimal embedding dimension"),
    },
    "nets": {
        "kind": (str, "sphere", "sphere, ball, stiefel or lowrank"),
        "n": (int, 3, "ambient dimension"),
        "k": (int, 1, "Stiefel rows"),
        "N": (int, 2, "columns of low-rank matrices"),
        "r": (int, 1, "rank for low-rank nets"),
        "eps": (float, 0.5, "net radius (rho for low-rank nets)"),
        "cap": (int, nets.DEFAULT_CAP, "cardinality cap"),
        "coverage_samples": (int, 2000, "random points used to estimate the covering radius"),
    },
    "rip-sparse": {
        "rows": (int, 200, "measurements"),
        "cols": (int, 12, "ambient dimension"),
        "k": (int, 2, "sparsity"),
    },
    "rip-matrix": {
        "m": (int, 60, "measurements"),
        "n": (int, 3, "rows"),
        "N": (int, 3, "columns"),
        "r": (int, 1, "rank"),
        "probes": (int, 2000, "random rank-r probes"),
        "use_net": (_bool, False, "also probe a 1/2-net of the rank-r ball"),
    },
    "nsp": {
        "rows": (int, 10, "measurements"),
        "cols": (int, 20, "ambient dimension"),
        "k": (int, 1, "order"),
        "budget": (int, 2000, "objective evaluations per instance"),
    },
    "rank-nsp": {
        "m": (int, 10, "measurements"),
        "n": (int, 4, "rows"),
        "N": (int, 4, "columns"),
        "r": (int, 1, "rank"),
        "budget": (int, 2000, "objective evaluations per instance"),
    },
    "complete": {
        "matrix": (_opt(str), None, "ground-truth matrix CSV; default: random incoherent matrix"),
        "operator": (_opt(str), None, "sampling operator JSON; default: fresh entry sampling"),
        "y": (_opt(str), None, "measured values CSV (one column); default: measure the matrix"),
        "basis": (str, "entry", "operator basis for fresh sampling (entry only)"),
        "n": (int, 20, "size of the default matrix"),
        "r": (int, 1, "rank of the default matrix"),
        "m": (_opt(int), None, "samples; default ceil(2 nu r n ln^2 n)"),
        "replacement": (_bool, True, "sample with replacement"),
        "step": (float, 1.0, "Douglas-Rachford step"),
        "max_iter": (int, 5000, "iteration cap"),
    },
    "golf": {
        "n": (int, 20, "matrix size"),
        "r": (int, 1, "rank"),
        "beta": (float, 1.0, "failure exponent"),
        "batch_size": (_opt(int), None, "samples per batch; default from the coherence"),
    },
    "tangent-conc": {
        "n": (int, 15, "matrix size"),
        "r": (int, 1, "rank"),
        "failure": (float, 1e-2, "target failure probability for the default m"),
        "m": (_opt(int), None, "samples; default from the failure target"),
        "ts": (_floats, [0.25, 0.5], "thresholds"),
    },
    "lie": {
        "n": (int, 4, "matrix size"),
        "ns": (_ints, [16, 32, 64, 128], "product lengths"),
    },
    "golden-thompson": {
        "n": (int, 6, "matrix size"),
    },
    "lieb-probe": {
        "n": (int, 5, "matrix size"),
    },
    "mat-bernstein": {
        "ensemble": (str, "dyad", "dyad or rademacher (identity weight)"),
        "n": (int, 8, "matrix size"),
        "m": (int, 200, "summands"),
        "ts": (_floats, [10.0, 15.0, 20.0, 25.0, 30.0], "thresholds"),
    },
}

DEFAULT_TRIALS = {
    "caratheodory": 1000, "montecarlo": 200, "chi2-tails": 100_000, "jl": 1, "nets": 1,
    "rip-sparse": 100, "rip-matrix": 1, "nsp": 20, "rank-nsp": 5, "complete": 1, "golf": 20,
    "tangent-conc": 1000, "lie": 100, "golden-thompson": 1000, "lieb-probe": 1000,
    "mat-bernstein": 10_000,
}

CONFIG_KEYS = ("subcommand", "params", "seed", "trials", "threads", "output_dir")


@dataclass
class ExperimentConfig:
    """One experiment: a subcommand with its parameters and run settings."""

    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    trials: int = 1
    threads: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if self.subcommand not in PARAMS:
            raise UsageError(f"unknown subcommand {self.subcommand!r}")
        schema = PARAMS[self.subcommand]
        unknown = set(self.params) - set(schema)
        if unknown:
            raise UsageError(f"unknown parameter(s) for {self.subcommand}: {', '.join(sorted(unknown))}")
        full = {}
        for name, (conv, default, _) in schema.items():
            raw = self.params.get(name, default)
            try:
                full[name] = conv(raw) if raw is not None else None
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {name}: {exc}") from None
        self.params = full
        if not 0 <= int(self.seed) < 2 ** 64:
            raise UsageError("seed must be a 64-bit unsigned integer")
        if int(self.trials) < 1 or int(self.threads) < 1:
            raise UsageError("trials and threads must be >= 1")
        self.seed, self.trials, self.threads = int(self.seed), int(self.trials), int(self.threads)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        d = json.loads(text)
        if not isinstance(d, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(d) - set(CONFIG_KEYS)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)


# --------------------------------------------------------------------------
# Helpers


def _map_trials(fn: Callable[[int, RngStream], object], cfg: ExperimentConfig, rng: RngStream) -> list:
    """Run ``fn(i, rng.child(i))`` for every trial; results come back in trial order."""
    if cfg.threads == 1:
        return [fn(i, rng.child(i)) for i in range(cfg.trials)]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(lambda i: fn(i, rng.child(i)), range(cfg.trials)))


def _table(columns: dict) -> str:
    return csvio.table_to_csv(list(columns), [list(c) for c in columns.values()])


def _read_points(path) -> prob_core.PointSet:
    return prob_core.PointSet.from_csv(Path(path).read_text())


# --------------------------------------------------------------------------
# Experiments; each returns (files, summary)


def run_caratheodory(cfg, rng):
    p = cfg.params
    pts = _read_points(p["points"]) if p["points"] else prob_core.PointSet(np.eye(p["dim"]))
    w = np.full(len(pts), 1.0 / len(pts))
    r = prob_core.radius(pts)
    errs = _map_trials(lambda i, s: prob_core.approx_caratheodory(pts, w, p["n_points"], s)[1], cfg, rng)
    rms = float(np.sqrt(np.mean(np.square(errs))))
    files = {"errors.csv": _table({"trial": np.arange(cfg.trials), "error": np.array(errs)})}
    return files, {"rms_error": rms, "radius": r, "bound": r / math.sqrt(p["n_points"])}


MC_FUNCTIONS = {
    "square": (lambda x: x * x, 1.0 / 3.0, math.sqrt(1.0 / 5.0)),
    "sine": (lambda x: np.sin(math.pi * x), 2.0 / math.pi, math.sqrt(0.5)),
    "exp": (np.exp, math.e - 1.0, math.sqrt((math.e ** 2 - 1.0) / 2.0)),
}


def run_montecarlo(cfg, rng):
    p = cfg.params
    if p["function"] not in MC_FUNCTIONS:
        raise UsageError(f"unknown function {p['function']!r}")
    f, exact, l2 = MC_FUNCTIONS[p["function"]]
    sampler = prob_core.uniform_sampler(f)
    est = _map_trials(lambda i, s: prob_core.monte_carlo_integrate(sampler, p["n"], s, l2)[0], cfg, rng)
    est = np.array(est)
    files = {"estimates.csv": _table({"trial": np.arange(cfg.trials), "estimate": est})}
    return files, {"exact": exact, "rms_error": float(np.sqrt(np.mean((est - exact) ** 2))),
                   "bound": l2 / math.sqrt(p["n"])}


def run_chi2(cfg, rng):
    p = cfg.params
    rows = {"eps": [], "tail": [], "threshold": [], "empirical": [], "bound": [], "slack": [], "trials": []}
    ok = True
    for j, eps in enumerate(p["eps"]):
        rep = prob_core.chi2_tail_experiment(p["m"], eps, cfg.trials, rng.fork(j + 1))
        slack = prob_core.chi2_contract_slack(float(rep.bound[0]), cfg.trials)
        for tail, i in (("upper", 0), ("lower", 1)):
            rows["eps"].append(eps)
            rows["tail"].append(i)
            rows["threshold"].append(float(rep.thresholds[i]))
            rows["empirical"].append(float(rep.empirical[i]))
            rows["bound"].append(float(rep.bound[i]))
            rows["slack"].append(slack)
            rows["trials"].append(cfg.trials)
            ok &= rep.empirical[i] <= rep.bound[i] + slack
    return {"tails.csv": _table(rows)}, {"holds": bool(ok), "tail_codes": {"0": "upper", "1": "lower"}}


def run_jl(cfg, rng):
    p = cfg.params
    pts = _read_points(p["points"]) if p["points"] else prob_core.PointSet(rng.fork(1).normal((p["n_points"], p["dim"])))
    m = p["m"] if p["m"] is not None else int(math.ceil(p["factor"] * prob_core.jl_min_dim(max(2, len(pts)), p["eps"])))
    results = _map_trials(lambda i, s: prob_core.jl_embed(pts, p["eps"], m, s), cfg, rng)
    dist = np.array([d for _, d in results])
    files = {
        "embedded.csv": results[0][0].to_csv(),
        "distortions.csv": _table({"trial": np.arange(cfg.trials), "distortion": dist}),
    }
    summary = {"m": m, "eps": p["eps"], "max_distortion": float(dist.max()),
               "success_rate": float(np.mean(dist <= p["eps"]))}
    files["report.json"] = json.dumps(summary, sort_keys=True, indent=2) + "\n"
    return files, summary


def run_nets(cfg, rng):
    p = cfg.params
    kind = p["kind"]
    if kind == "sphere":
        net = nets.sphere_net(p["n"], p["eps"], rng, p["cap"])
        samples = nets._uniform_sphere(rng.fork(1), p["n"], p["coverage_samples"])
    elif kind == "ball":
        net = nets.ball_net(p["n"], p["eps"], rng, p["cap"])
        samples = nets._uniform_ball(rng.fork(1), p["n"], p["coverage_samples"])
    elif kind == "stiefel":
        net = nets.stiefel_net(p["n"], p["k"], p["eps"], rng, p["cap"])
        g = rng.fork(1).normal((p["coverage_samples"], p["k"], p["n"]))
        samples = nets._orthonormalize_rows(g)[0]
    elif kind == "lowrank":
        net = nets.lowrank_net(p["n"], p["N"], p["r"], p["eps"], rng, p["cap"])
        s = rng.fork(1)
        samples = np.array([sensing.random_lowrank_unit(s, p["n"], p["N"], p["r"]) * s.uniform() ** (1.0 / (p["r"] * (p["n"] + p["N"])))
                            for _ in range(p["coverage_samples"])])
    else:
        raise UsageError(f"unknown net kind {kind!r}")
    files = {"net.csv": net.to_csv(), "net.json": net.sidecar_json() + "\n"}
    return files, {"cardinality": len(net), "cardinality_bound": net.cardinality_bound(),
                   "covering_radius_estimate": nets.covering_radius_estimate(net, samples)}


def run_rip_sparse(cfg, rng):
    p = cfg.params
    deltas = _map_trials(
        lambda i, s: sensing.sparse_rip_constant(prob_core.gaussian_matrix(s, p["rows"], p["cols"]), p["k"]),
        cfg, rng)
    deltas = np.array(deltas)
    files = {"deltas.csv": _table({"trial": np.arange(cfg.trials), "delta": deltas})}
    return files, {"fraction_below_third": float(np.mean(deltas < 1.0 / 3.0)), "max_delta": float(deltas.max())}


def run_rip_matrix(cfg, rng):
    p = cfg.params

    def one(i, s):
        g = sensing.gaussian_map_new(s, p["m"], p["n"], p["N"])
        return sensing.matrix_rip_estimate(g, p["r"], p["probes"], s.fork(s.stream_id ^ 1), p["use_net"])

    est = np.array(_map_trials(one, cfg, rng))
    return {"estimates.csv": _table({"trial": np.arange(cfg.trials), "delta_estimate": est})}, \
        {"max_estimate": float(est.max())}


def run_nsp(cfg, rng):
    p = cfg.params

    def one(i, s):
        a = prob_core.gaussian_matrix(s, p["rows"], p["cols"])
        rep = recovery.nsp_falsify(a, p["k"], p["budget"], s)
        return rep.violated, rep.margin, rep.budget_used

    res = _map_trials(one, cfg, rng)
    files = {"nsp.csv": _table({"trial": np.arange(cfg.trials),
                                "violated": np.array([int(v) for v, _, _ in res]),
                                "margin": np.array([m for _, m, _ in res]),
                                "evaluations": np.array([b for _, _, b in res])})}
    return files, {"violations": int(sum(v for v, _, _ in res))}


def run_rank_nsp(cfg, rng):
    p = cfg.params

    def one(i, s):
        g = sensing.gaussian_map_new(s, p["m"], p["n"], p["N"])
        rep = recovery.rank_nsp_falsify(g, p["r"], p["budget"], s)
        return rep.violated, rep.margin, rep.budget_used

    res = _map_trials(one, cfg, rng)
    files = {"rank_nsp.csv": _table({"trial": np.arange(cfg.trials),
                                     "violated": np.array([int(v) for v, _, _ in res]),
                                     "margin": np.array([m for _, m, _ in res]),
                                     "evaluations": np.array([b for _, _, b in res])})}
    return files, {"violations": int(sum(v for v, _, _ in res))}


def run_complete(cfg, rng):
    p = cfg.params
    if p["basis"] != "entry":
        raise UsageError("only the entry basis can be sampled from the command line")
    a = csvio.read_matrix(p["matrix"]) if p["matrix"] else sensing.incoherent_psd(rng.fork(1), p["n"], p["r"])
    if p["operator"]:
        op = sensing.SamplingOperator.from_json(Path(p["operator"]).read_text())
    else:
        if a.shape[0] != a.shape[1]:
            raise UsageError("entry sampling needs a square matrix")
        n = a.shape[0]
        basis = sensing.OperatorBasis.entry(n)
        m = p["m"]
        if m is None:
            nu = sensing.coherence(basis, a).nu
            r = max(1, linalg_core.svd(a).numerical_rank)
            m = int(math.ceil(2.0 * nu * r * n * math.log(n) ** 2))
        op = sensing.sampling_operator_new(basis, m, rng.fork(2), p["replacement"])
    y = csvio.read_matrix(p["y"]).ravel() if p["y"] else op.measure(a)
    rep = recovery.complete(op, y, recovery.SolverConfig(step=p["step"], max_iter=p["max_iter"]))
    report = rep.to_dict()
    report["relative_error"] = float(np.linalg.norm(rep.solution - a) / max(np.linalg.norm(a), 1e-300))
    files = {
        "solution.csv": csvio.matrix_to_csv(rep.solution),
        "operator.json": op.to_json() + "\n",
        "y.csv": csvio.matrix_to_csv(np.asarray(y)[:, None]),
        "report.json": json.dumps(report, sort_keys=True, indent=2) + "\n",
    }
    return files, report


def run_golf(cfg, rng):
    p = cfg.params
    n, r = p["n"], p["r"]
    basis = sensing.OperatorBasis.entry(n)
    l = recovery.golfing_batches(n, r)

    def one(i, s):
        a = sensing.incoherent_psd(s, n, r)
        proj = sensing.TangentProjector.from_matrix(a)
        nu = sensing.coherence(basis, a, proj).nu
        mi = p["batch_size"] or recovery.golfing_batch_size(n, r, nu, l, p["beta"])
        cert = recovery.golfing_certificate(basis, a, proj, [mi] * l, s)
        _, c2, c3 = recovery.verify_certificate(cert, a, proj, n)
        return mi, cert.cond_tangent, cert.cond_complement, int(cert.halves_each_step()), int(c2 and c3)

    res = _map_trials(one, cfg, rng)
    cols = ["batch_size", "cond_tangent", "cond_complement", "halves", "certified"]
    table = {"trial": np.arange(cfg.trials)}
    for j, c in enumerate(cols):
        table[c] = np.array([row[j] for row in res])
    ok = np.array([row[3] and row[4] for row in res], dtype=bool)
    return {"golf.csv": _table(table)}, {"batches": l, "success_rate": float(ok.mean())}


def run_tangent(cfg, rng):
    p = cfg.params
    n, r = p["n"], p["r"]
    a = sensing.incoherent_psd(rng.fork(1), n, r)
    basis = sensing.OperatorBasis.entry(n)
    proj = sensing.TangentProjector.from_matrix(a)
    nu = recovery.tangent_nu(basis, proj)
    m = p["m"] or recovery.tangent_sample_count(n, r, nu, p["failure"])
    rep = recovery.tangent_operator_concentration(basis, proj, m, cfg.trials, p["ts"], rng, nu)
    return {"tail.csv": rep.to_csv()}, {"m": m, "nu": nu, "holds": rep.holds()}


def run_lie(cfg, rng):
    p = cfg.params

    def one(i, s):
        a = cm.random_symmetric(s, p["n"], s.uniform())
        b = cm.random_symmetric(s, p["n"], s.uniform())
        return cm.lie_product_errors(a, b, p["ns"])

    errs = np.array(_map_trials(one, cfg, rng))
    table = {"trial": np.arange(cfg.trials)}
    for j, nn in enumerate(p["ns"]):
        table[f"error_{nn}"] = errs[:, j]
    return {"errors.csv": _table(table)}, {"ns": p["ns"]}


def run_golden_thompson(cfg, rng):
    p = cfg.params
    res = np.array(_map_trials(
        lambda i, s: cm.golden_thompson_gap(cm.random_symmetric(s, p["n"]), cm.random_symmetric(s, p["n"])), cfg, rng))
    holds = res[:, 0] <= res[:, 1] + 1e-9 * np.abs(res[:, 1])
    files = {"gaps.csv": _table({"trial": np.arange(cfg.trials), "lhs": res[:, 0], "rhs": res[:, 1]})}
    return files, {"violations": int((~holds).sum())}


def run_lieb(cfg, rng):
    p = cfg.params

    def one(i, s):
        return cm.lieb_concavity_probe(cm.random_symmetric(s, p["n"]), cm.random_spd(s, p["n"]), cm.random_spd(s, p["n"]))

    gaps = np.array(_map_trials(one, cfg, rng))
    return {"gaps.csv": _table({"trial": np.arange(cfg.trials), "gap": gaps})}, \
        {"min_gap": float(gaps.min())}


def run_mat_bernstein(cfg, rng):
    p = cfg.params
    if p["ensemble"] == "dyad":
        e = cm.MatrixEnsemble.dyad(p["n"])
    elif p["ensemble"] == "rademacher":
        e = cm.MatrixEnsemble.rademacher(np.eye(p["n"])[None])
    else:
        raise UsageError(f"unknown ensemble {p['ensemble']!r}")
    rep = cm.bernstein_tail_experiment(e, p["m"], p["ts"], cfg.trials, rng)
    k = len(rep.thresholds)
    cols = {
        "t": rep.thresholds, "empirical": rep.empirical,
        "bound_theo_bern1": rep.curves["theo_bern1"], "bound_lieb": rep.curves["lieb"],
        "trials": np.full(k, cfg.trials, dtype=np.int64), "n": np.full(k, p["n"], dtype=np.int64),
        "m": np.full(k, p["m"], dtype=np.int64), "seed": [cfg.seed] * k,
    }
    return {"tail.csv": _table(cols)}, {
        "holds_theo_bern1": rep.holds("theo_bern1"), "holds_lieb": rep.holds("lieb"),
        "v0_sq": rep.meta["v0_sq"], "c": rep.meta["c"], "sigma_sq": rep.meta["sigma_sq"]}


RUNNERS = {
    "caratheodory": run_caratheodory, "montecarlo": run_montecarlo, "chi2-tails": run_chi2,
    "jl": run_jl, "nets": run_nets, "rip-sparse": run_rip_sparse, "rip-matrix": run_rip_matrix,
    "nsp": run_nsp, "rank-nsp": run_rank_nsp, "complete": run_complete, "golf": run_golf,
    "tangent-conc": run_tangent, "lie": run_lie, "golden-thompson": run_golden_thompson,
    "lieb-probe": run_lieb, "mat-bernstein": run_mat_bernstein,
}

TOLERANCES = {
    "symmetry": linalg_core.SYMMETRY_TOL,
    "nsp_violation": recovery.VIOLATION_TOL,
    "binomial_sigmas": 3.0,
    "golden_thompson_relative": 1e-9,
}


# --------------------------------------------------------------------------
# Driver


def run(cfg: ExperimentConfig) -> int:
    """Run one experiment and write its artifacts; returns the exit status."""
    out = Path(cfg.output_dir)
    created_dir = not out.exists()
    written: list[Path] = []
    start = time.perf_counter()
    try:
        rng = RngStream(cfg.seed, 0)
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            files, summary = RUNNERS[cfg.subcommand](cfg, rng)
        manifest = {
            "config": json.loads(cfg.to_json()),
            "version": __version__,
            "wall_time_s": time.perf_counter() - start,
            "stream_layout": "Philox keyed by (seed, stream_id); root stream 0, trial i uses child(i), "
                             "auxiliary draws use fork(j)",
            "tolerances": TOLERANCES,
            "summary": summary,
            "files": sorted(files),
        }
        out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(files.items()):
            path = out / name
            with open(path, "w", newline="") as fh:
                fh.write(text)
            written.append(path)
        path = out / "manifest.json"
        path.write_text(json.dumps(manifest, sort_keys=True, indent=2, default=_json_default) + "\n")
        written.append(path)
        return EXIT_OK
    except BaseException as exc:
        for path in written:
            path.unlink(missing_ok=True)
        if created_dir and out.exists() and not any(out.iterdir()):
            out.rmdir()
        if isinstance(exc, UsageError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if isinstance(exc, (linalg_core.ConvergenceError, np.linalg.LinAlgError, FloatingPointError)):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        if isinstance(exc, (ValueError, OSError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        raise


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lowrank-recovery", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, schema in PARAMS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--trials", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", default="out")
        sp.add_argument("--config", default=None, help="JSON config; its values override flags")
        for pname, (_, default, help_text) in schema.items():
            sp.add_argument("--" + pname.replace("_", "-"), dest="p_" + pname, default=None, metavar=pname.upper(),
                            help=f"{help_text} (default: {default})")
    return parser


def config_from_args(argv) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    params = {k[2:]: v for k, v in vars(args).items() if k.startswith("p_") and v is not None}
    d = {"subcommand": args.subcommand, "params": params, "seed": args.seed,
         "trials": args.trials if args.trials is not None else DEFAULT_TRIALS[args.subcommand],
         "threads": args.threads, "output_dir": args.out}
    if args.config:
        try:
            over = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        if not isinstance(over, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(over) - set(CONFIG_KEYS)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        if over.get("subcommand", args.subcommand) != args.subcommand:
            raise UsageError("config subcommand does not match the command line")
        d["params"] = {**params, **over.get("params", {})}
        for key in ("seed", "trials", "threads", "output_dir"):
            if key in over:
                d[key] = over[key]
    return ExperimentConfig(**d)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
