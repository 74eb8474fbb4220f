"""Experiment runner and command-line interface."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, graph, learning, patterns, recall
from .learning import ConfigError, NotConvergedError

CSV_FIELDS = ["scenario", "n", "k", "m", "variant", "phi", "e0", "trials",
              "per_first", "per_final", "bound", "ci_halfwidth"]


@dataclass
class ExperimentConfig:
    scenario: str = "desk"
    n: int = 100
    k: int = 50
    Q: int = 11
    gamma: int = 2
    upsilon: int = 2
    dstar: int = 10
    C_sample: int = 2000
    alpha0: float = 1.5
    eta: float = 1.0
    theta0: float = 0.031
    epsilon: float = 1e-3
    max_passes: int = 1000
    decay_passes: float = 300.0
    phi: float = 1.0
    tmax_factor: int = 20
    variant: str = "MV"
    trials: int = 100
    error_counts: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    ensemble_size: int = 5
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            self.spec
            self.learning
            self.recall_config(1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("gamma", "upsilon", "dstar", "C_sample", "tmax_factor", "ensemble_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.trials < 0:
            raise ConfigError("trials must be >= 0")
        if any(not 0 <= e <= self.n for e in self.error_counts):
            raise ConfigError(f"error counts must lie in [0, n={self.n}]")
        if len(set(self.error_counts)) != len(self.error_counts):
            raise ConfigError("error counts must be distinct")
        if not self.scenario or any(c in self.scenario for c in ",\n\"'"):
            raise ConfigError(f"bad scenario name {self.scenario!r}")

    @property
    def spec(self) -> patterns.ModelSpec:
        return patterns.ModelSpec(self.Q, self.n, self.k)

    @property
    def learning(self) -> learning.LearningConfig:
        return learning.LearningConfig(alpha0=self.alpha0, eta=self.eta, theta0=self.theta0,
                                       epsilon=self.epsilon, max_passes=self.max_passes,
                                       decay_passes=self.decay_passes)

    def recall_config(self, e0: int) -> recall.RecallConfig:
        return recall.RecallConfig(self.phi, recall.tmax_for(e0, self.tmax_factor), self.variant)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _convert(name: str, raw: str, default):
    if isinstance(default, list):
        return [int(t) for t in raw.split(",") if t.strip()]
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    return type(default)(raw)


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat ``key = value`` lines (``#`` starts a comment); missing keys keep defaults."""
    values = dataclasses.asdict(ExperimentConfig())
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in values:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw, values[key])
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value {raw!r} for {key}") from None
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


class ScenarioError(RuntimeError):
    pass


@dataclass
class ReportRow:
    scenario: str
    n: int
    k: int
    m: int
    variant: str
    phi: float
    e0: int
    trials: int
    per_first: float
    per_final: float
    bound: float
    ci_halfwidth: float


@dataclass
class ExperimentReport:
    rows: list[ReportRow]
    config: ExperimentConfig | None = None
    diagnostics: list[dict] = field(default_factory=list)


def ci_halfwidth(p: float, trials: int) -> float:
    return 1.96 * float(np.sqrt(p * (1 - p) / trials)) if trials else 0.0


def simulate_recall(g: graph.NeuralGraph, X, e0: int, trials: int, rcfg: recall.RecallConfig,
                    rng) -> tuple[int, int]:
    """Pattern errors after the first and the last iteration over ``trials`` trials."""
    X = np.asarray(X)
    first = final = 0
    for _ in range(trials):
        x = X[rng.integers(len(X))]
        x0, _ = recall.inject_noise(x, e0, g.Q, rng)
        out = recall.recall(g, x0, rcfg, reference=x)
        first += out.bit_errors_first_iter > 0
        final += out.bit_errors_final > 0
    return first, final


def graph_bound(g: graph.NeuralGraph, e0: int, phi: float) -> float:
    dd = graph.degree_distributions(g)
    return analysis.error_bound(analysis.AnalysisInput(dd, g.m, g.n, phi, e0)).pE_bound


def _member(cfg: ExperimentConfig, idx: int, rng) -> dict:
    where = f"scenario={cfg.scenario} member={idx}"
    gen_rng, learn_rng, recall_rng = rng.spawn(3)
    spec = cfg.spec
    try:
        G = patterns.generate_generator_matrix(spec, cfg.gamma, cfg.dstar, gen_rng)
        ts = patterns.build_training_set(spec, G, cfg.upsilon, cfg.C_sample, gen_rng)
    except patterns.InfeasibleParameters as exc:
        raise ScenarioError(f"{where} stage=generate: {exc}") from exc
    try:
        g, rep = learning.learn_graph(ts, cfg.learning, learn_rng, Q=cfg.Q)
    except NotConvergedError as exc:
        raise NotConvergedError(f"{where} stage=learn: {exc}", exc.result) from exc
    out = {"diag": {"member": idx, "passes": rep.passes, "rank": rep.rank,
                    "constraints": g.m, "duplicates_dropped": rep.duplicates_dropped,
                    "sparsity_histogram": np.histogram(rep.sparsity, bins=10, range=(0, 1))[0].tolist(),
                    "mean_sparsity": float(np.mean(rep.sparsity)) if rep.sparsity else 0.0},
           "counts": {}}
    for e0, r in zip(cfg.error_counts, recall_rng.spawn(len(cfg.error_counts))):
        first, final = simulate_recall(g, ts.X, e0, cfg.trials, cfg.recall_config(e0), r)
        bound = graph_bound(g, e0, cfg.phi) if g.num_edges else 1.0
        out["counts"][e0] = (first, final, bound, g.m)
    return out


def run_scenario(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentReport:
    """Generate, learn and recall for every ensemble member; aggregate per error count."""
    cfg.validate()
    members = np.random.default_rng(cfg.seed).spawn(cfg.ensemble_size)
    jobs = list(enumerate(members))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda a: _member(cfg, *a), jobs))
    else:
        results = [_member(cfg, *a) for a in jobs]
    rows = []
    if cfg.trials > 0:
        for e0 in sorted(cfg.error_counts):
            first = sum(r["counts"][e0][0] for r in results)
            final = sum(r["counts"][e0][1] for r in results)
            bound = float(np.mean([r["counts"][e0][2] for r in results]))
            m = int(round(np.mean([r["counts"][e0][3] for r in results])))
            N = cfg.trials * cfg.ensemble_size
            pf = final / N
            rows.append(ReportRow(cfg.scenario, cfg.n, cfg.k, m, cfg.variant, cfg.phi, e0, N,
                                  first / N, pf, bound, ci_halfwidth(pf, N)))
    return ExperimentReport(rows, cfg, [r["diag"] for r in results])


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def emit_report(r: ExperimentReport, path) -> None:
    """Write the CSV table; config echo and diagnostics go to ``<path>.json``."""
    rows = sorted(r.rows, key=lambda row: (row.scenario, row.e0))
    lines = [",".join(CSV_FIELDS)]
    for row in rows:
        lines.append(",".join(_fmt(getattr(row, f)) for f in CSV_FIELDS))
    Path(path).write_text("\n".join(lines) + "\n")
    meta = {"config": r.config.to_text() if r.config else None,
            "seed": r.config.seed if r.config else None,
            "learning": r.diagnostics}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def parse_report(path) -> list[ReportRow]:
    types = {f.name: f.type for f in dataclasses.fields(ReportRow)}
    conv = {"int": int, "float": float, "str": str}
    with open(path, newline="") as fh:
        return [ReportRow(**{k: conv[types[k]](v) for k, v in rec.items()})
                for rec in csv.DictReader(fh)]


# -- CLI ----------------------------------------------------------------------

EXIT_CONFIG, EXIT_IO, EXIT_NOT_CONVERGED = 2, 3, 4


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _override(cfg: ExperimentConfig, args, names) -> ExperimentConfig:
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    cfg.validate()
    return cfg


def _write_table(path, header, rows):
    text = ",".join(header) + "\n" + "".join(",".join(_fmt(v) for v in r) + "\n" for r in rows)
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen_data(args):
    cfg = _override(_base_config(args), args, ["n", "k", "Q", "gamma", "upsilon", "dstar", "C_sample"])
    if not args.out:
        raise ConfigError("gen-data needs --out")
    rng = np.random.default_rng(cfg.seed)
    G = patterns.generate_generator_matrix(cfg.spec, cfg.gamma, cfg.dstar, rng)
    count = "all" if args.all else cfg.C_sample
    ts = patterns.build_training_set(cfg.spec, G, cfg.upsilon, count, rng, seed=cfg.seed)
    patterns.write_training_set(args.out, ts)
    patterns.write_generator(args.generator_out or args.out + ".gen", G, cfg.seed)
    print(f"wrote {ts.C} patterns (n={cfg.n}, k={cfg.k}) to {args.out}")


def cmd_learn(args):
    cfg = _override(_base_config(args), args, ["alpha0", "eta", "theta0", "epsilon", "max_passes"])
    if not args.out:
        raise ConfigError("learn needs --out")
    ts = patterns.read_training_set(args.patterns)
    lc = dataclasses.replace(cfg.learning, m=args.m)
    g, rep = learning.learn_graph(ts, lc, np.random.default_rng(cfg.seed), Q=ts.spec.Q, seed=cfg.seed)
    graph.write_graph(args.out, g)
    print(f"learned {g.m} constraints in at most {max(rep.passes, default=0)} passes, "
          f"rank {rep.rank}, mean sparsity {np.mean(rep.sparsity) if rep.sparsity else 0:.3f}")


def cmd_recall_sim(args):
    cfg = _override(_base_config(args), args, ["phi", "variant", "trials", "tmax_factor"])
    g = graph.read_graph(args.weights)
    ts = patterns.read_training_set(args.patterns)
    errors = _ints(args.errors) if args.errors else cfg.error_counts
    rows = []
    for e0, r in zip(errors, np.random.default_rng(cfg.seed).spawn(len(errors))):
        first, final = simulate_recall(g, ts.X, e0, cfg.trials, cfg.recall_config(e0), r)
        N = cfg.trials
        rows.append((e0, N, first / N if N else 0.0, final / N if N else 0.0))
    _write_table(args.out, ["e0", "trials", "per_first", "per_final"], rows)


def cmd_analyze(args):
    cfg = _override(_base_config(args), args, ["phi"])
    g = graph.read_graph(args.weights)
    dd = graph.degree_distributions(g)
    errors = _ints(args.errors) if args.errors else cfg.error_counts
    rows = []
    for e0 in errors:
        b = analysis.error_bound(analysis.AnalysisInput(dd, g.m, g.n, cfg.phi, e0))
        rows.append((e0, b.pe1, b.pe2, b.pb, b.pe_block, b.pE_bound))
    _write_table(args.out, ["e0", "pe1", "pe2", "pb", "pe", "bound"], rows)


def cmd_expander_check(args):
    g, dp, dc = graph.read_edge_list(args.graph, Q=args.Q)
    ok = graph.is_expander(g, args.alpha, args.beta)
    lines = [f"n={g.n} m={g.m} d_p={dp} d_c={dc}",
             f"expander(alpha={args.alpha}, beta={args.beta}): {ok}",
             f"expansion_lower_bound: {graph.expansion_lower_bound(g.n, dp, dc, args.alpha)!r}"
             if dc > 0 and 0 < args.alpha < 1 else "expansion_lower_bound: n/a"]
    bound = graph.min_distance_bound(dp, args.beta, args.alpha, g.n)
    lines.append(f"min_distance_bound: {bound if (ok and bound) else 'condition not met'}")
    if args.enumerate:
        X = graph.null_patterns(g, args.Q)
        lines.append(f"patterns: {len(X)} min_distance: {graph.min_hamming_distance(X)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_experiment(args):
    if not args.out:
        raise ConfigError("experiment needs --out")
    cfg = _base_config(args)
    rep = run_scenario(cfg, threads=args.threads)
    emit_report(rep, args.out)
    print(f"wrote {len(rep.rows)} rows to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--config", default=None, help="flat key = value config file")
    common.add_argument("--out", default=None, help="output path")
    common.add_argument("--threads", type=int, default=None, help="cap on worker threads")

    p = argparse.ArgumentParser(prog="assocmem", description=__doc__, parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", parents=[common], help="write a training set and its generator")
    for name, typ in (("n", int), ("k", int), ("Q", int), ("gamma", int), ("upsilon", int),
                      ("dstar", int)):
        s.add_argument(f"--{name}", type=typ)
    s.add_argument("--count", dest="C_sample", type=int)
    s.add_argument("--all", action="store_true", help="enumerate every message")
    s.add_argument("--generator-out", default=None)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("learn", parents=[common], help="learn a weights file from patterns")
    s.add_argument("--patterns", required=True)
    s.add_argument("--alpha0", type=float)
    s.add_argument("--eta", type=float)
    s.add_argument("--theta0", type=float)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--max-passes", dest="max_passes", type=int)
    s.add_argument("--m", type=int, default=None)
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("recall-sim", parents=[common], help="run recall trials")
    s.add_argument("--weights", required=True)
    s.add_argument("--patterns", required=True)
    s.add_argument("--errors", default=None, help="comma-separated error counts")
    s.add_argument("--trials", type=int)
    s.add_argument("--variant", choices=recall.VARIANTS)
    s.add_argument("--phi", type=float)
    s.add_argument("--tmax-factor", dest="tmax_factor", type=int)
    s.set_defaults(func=cmd_recall_sim)

    s = sub.add_parser("analyze", parents=[common], help="error bounds from a weights file")
    s.add_argument("--weights", required=True)
    s.add_argument("--errors", default=None)
    s.add_argument("--phi", type=float)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("expander-check", parents=[common], help="expansion checks on an edge list")
    s.add_argument("--graph", required=True)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--Q", type=int, default=2)
    s.add_argument("--enumerate", action="store_true", help="enumerate patterns and measure distance")
    s.set_defaults(func=cmd_expander_check)

    s = sub.add_parser("experiment", parents=[common], help="full scenario from a config file")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, patterns.InfeasibleParameters, ScenarioError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotConvergedError as exc:
        print(f"error: not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (OSError, ValueError, graph.BudgetExceeded) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0
