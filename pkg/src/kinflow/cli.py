"""Command-line pipeline: generate -> train -> sample -> diagnose -> verify.

Subcommands: ``gen-data``, ``train``, ``sample``, ``diagnose``,
``verify-theory``, ``kts-sweep``, ``run`` (cached pipeline), ``plot``.

Exit codes: 0 success, 2 invalid configuration, 3 stage failure,
4 verification-check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import datasets, diagnostics, net, sampler, svgplot, theory
from .efm import EfmField, MixtureModel, linear_schedule

VERSION = "0.1.0"

EXIT_OK = 0
EXIT_INVALID_CONFIG = 2
EXIT_STAGE_FAILURE = 3
EXIT_CHECK_FAILURE = 4


class StageFailure(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "dense_sparse"
    n: int = 1000
    seed: int = 7


@dataclass(frozen=True)
class TrainStageConfig:
    learning_rate: float = 3e-4
    weight_decay: float = 1e-4
    batch_size: int = 256
    iterations: int = 50_000
    seed: int = 1


@dataclass(frozen=True)
class SolverStageConfig:
    method: str = "euler"
    steps: int = 100
    delta_cut: float = 0.0
    m: int = 500
    seed: int = 5


@dataclass(frozen=True)
class KtsConfig:
    alpha0: float = 0.0
    beta0: float = 0.0
    k: float = 3.0
    tau_split: float = 0.6


@dataclass(frozen=True)
class DiagConfig:
    knn_k: int = 50
    kde_bandwidth: float = 0.1
    tau_gap: float = 1.0 / 3.0
    k_mem: int = 2
    eps: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainStageConfig = field(default_factory=TrainStageConfig)
    solver: SolverStageConfig = field(default_factory=SolverStageConfig)
    kts: KtsConfig = field(default_factory=KtsConfig)
    diagnostics: DiagConfig = field(default_factory=DiagConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, blob: dict) -> "ExperimentConfig":
        return cls(dataset=DatasetConfig(**blob.get("dataset", {})),
                   train=TrainStageConfig(**blob.get("train", {})),
                   solver=SolverStageConfig(**blob.get("solver", {})),
                   kts=KtsConfig(**blob.get("kts", {})),
                   diagnostics=DiagConfig(**blob.get("diagnostics", {})))

    def with_profile(self, profile: str) -> "ExperimentConfig":
        if profile == "full":
            return replace(self, dataset=replace(self.dataset, n=1000),
                           train=replace(self.train, iterations=50_000),
                           solver=replace(self.solver, m=500, steps=100))
        if profile == "ci":
            return replace(self, dataset=replace(self.dataset, n=500),
                           train=replace(self.train, iterations=5_000),
                           solver=replace(self.solver, m=200, steps=50))
        raise ValueError(f"unknown profile {profile!r}")

    def with_master_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, dataset=replace(self.dataset, seed=seed),
                       train=replace(self.train, seed=seed + 1),
                       solver=replace(self.solver, seed=seed + 2))


def config_hash(blob: dict) -> str:
    canon = json.dumps(blob, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# stage implementations (shared by subcommands and the pipeline)


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def stage_gen(cfg: ExperimentConfig, outdir: str) -> dict:
    data = datasets.generate(cfg.dataset.kind, cfg.dataset.n, cfg.dataset.seed)
    heldout = datasets.generate(cfg.dataset.kind, max(cfg.solver.m, 10),
                                cfg.dataset.seed + 1)
    data_path = os.path.join(outdir, "data.csv")
    held_path = os.path.join(outdir, "heldout.csv")
    datasets.save_csv(data, data_path)
    datasets.save_csv(heldout, held_path)
    return {"data": data_path, "heldout": held_path}


def stage_train(cfg: ExperimentConfig, outdir: str) -> dict:
    data = datasets.load_csv(os.path.join(outdir, "data.csv"),
                             kind=cfg.dataset.kind, seed=cfg.dataset.seed)
    tc = net.TrainConfig(learning_rate=cfg.train.learning_rate,
                         weight_decay=cfg.train.weight_decay,
                         batch_size=cfg.train.batch_size,
                         iterations=cfg.train.iterations,
                         seed=cfg.train.seed)
    result = net.train(data.points, tc)
    model_path = os.path.join(outdir, "model.ckpt")
    loss_path = os.path.join(outdir, "loss.csv")
    net.save_checkpoint(result.params, model_path)
    with open(loss_path, "w") as fh:
        fh.write("iter,loss\n")
        for i, loss in enumerate(result.losses):
            fh.write(f"{i},{loss!r}\n")
    return {"model": model_path, "loss_curve": loss_path}


def _shaped(base, kts_cfg: KtsConfig):
    schedule = sampler.KtsSchedule(alpha0=kts_cfg.alpha0, beta0=kts_cfg.beta0,
                                   k=kts_cfg.k, tau_split=kts_cfg.tau_split)
    return sampler.shaped_field(base, schedule), schedule


def stage_sample(cfg: ExperimentConfig, outdir: str) -> dict:
    params = net.load_checkpoint(os.path.join(outdir, "model.ckpt"))
    base = net.NeuralVelocityField(params)
    field_fn, schedule = _shaped(base, cfg.kts)
    scfg = sampler.SolverConfig(method=cfg.solver.method, steps=cfg.solver.steps,
                                delta_cut=cfg.solver.delta_cut, seed=cfg.solver.seed)
    trajs = sampler.sample_batch(field_fn, cfg.solver.m, scfg,
                                 tau_split=cfg.kts.tau_split,
                                 meta={"field": "neural", "seed": cfg.solver.seed,
                                       "alpha0": cfg.kts.alpha0,
                                       "beta0": cfg.kts.beta0})
    traces_path = os.path.join(outdir, "traces.csv")
    summary_path = os.path.join(outdir, "summary.json")
    sampler.save_traces(trajs, traces_path)
    _write_json(summary_path, sampler.batch_summary(trajs))
    return {"traces": traces_path, "summary": summary_path}


def stage_diagnose(cfg: ExperimentConfig, outdir: str) -> dict:
    data = datasets.load_csv(os.path.join(outdir, "data.csv"),
                             kind=cfg.dataset.kind, seed=cfg.dataset.seed)
    heldout = datasets.load_csv(os.path.join(outdir, "heldout.csv"))
    with open(os.path.join(outdir, "summary.json")) as fh:
        summary = json.load(fh)
    report = _diagnose_report(summary, data, heldout.points, cfg.diagnostics)
    report["config"] = cfg.to_dict()
    path = os.path.join(outdir, "diagnose_report.json")
    _write_json(path, report)
    return {"report": path}


def _diagnose_report(summary: dict, data: datasets.LabeledDataset,
                     heldout_points: np.ndarray | None, diag: DiagConfig) -> dict:
    kpes = np.array([t["kpe"] for t in summary["trajectories"]])
    endpoints = np.array([t["endpoint"] for t in summary["trajectories"]])
    stats = diagnostics.kpe_density_report(kpes, endpoints, data,
                                           knn_k=diag.knn_k,
                                           kde_bandwidth=diag.kde_bandwidth)
    mem = diagnostics.f_mem(endpoints, data.points, tau_gap=diag.tau_gap,
                            k_mem=diag.k_mem)
    w2 = None
    if heldout_points is not None and len(heldout_points) >= len(endpoints):
        w2 = diagnostics.exact_w2(endpoints, heldout_points[:len(endpoints)])
    return {
        "rho_knn": stats.rho_knn,
        "rho_kde": stats.rho_kde,
        "cliffs_delta": stats.cliffs_delta,
        "mwu_u": stats.mwu_u,
        "mwu_p": stats.mwu_p,
        "cohens_d": stats.cohens_d,
        "f_mem": mem.f_mem,
        "w2": w2,
        "n": stats.n,
        "mean_kpe_sparse": stats.mean_kpe_sparse,
        "mean_kpe_dense": stats.mean_kpe_dense,
    }


def _isolated_probe(atoms: np.ndarray) -> tuple[np.ndarray, float]:
    """A frozen probe point near the most isolated atom, plus its gap bound.

    The point sits a third of the isolation radius away from that atom, so
    the terminal posterior concentrates on it early and the non-collision
    bound c is comfortably positive.
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    if len(atoms) == 1:
        x = atoms[0].copy()
        x[0] += 1.0
        return x, 0.9
    d2 = ((atoms[:, None, :] - atoms[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    nearest = np.sqrt(d2.min(axis=1))
    j = int(np.argmax(nearest))
    direction = np.zeros(atoms.shape[1])
    direction[0] = 1.0
    offset = nearest[j] / 3.0
    x = atoms[j] + offset * direction
    gaps = np.sqrt(((x[None, :] - atoms) ** 2).sum(axis=1))
    return x, 0.9 * float(gaps.min())


def _theory_report(atoms_by_dim: dict[int, np.ndarray], eps_values, seed: int) -> dict:
    """Run the bound, remainder, concentration, blow-up, and tail-bound suites."""
    rng = np.random.default_rng(seed)
    ts = np.linspace(0.1, 0.9, 9)
    report = {"bounds": [], "remainders": [], "concentration": [],
              "blowup": [], "tail_bound": [], "linear_slopes_exact": True}

    for t in ts:
        mix2 = MixtureModel(np.zeros((1, 2)), linear_schedule())
        consts = theory.bound_constants(mix2, float(t), 0, 0.1)
        if abs(consts.lower_slope - 0.5) > 1e-14 or abs(consts.upper_slope - 12.0) > 1e-14:
            report["linear_slopes_exact"] = False

    for dim, atoms in atoms_by_dim.items():
        mix = MixtureModel(atoms, linear_schedule())
        for eps in eps_values:
            points, rejected = theory.sample_dominant_points(mix, ts, eps, 40, rng)
            bounds = theory.check_energy_density_bounds(mix, points, eps)
            rem_fail = 0
            for z, t in points:
                lg = theory.check_local_gaussian_remainder(mix, z, t, eps)
                sr = theory.check_score_remainder(mix, z, t, eps)
                if (lg is not None and not lg[1]) or (sr is not None and not sr[1]):
                    rem_fail += 1
            report["bounds"].append({
                "dim": dim, "n_atoms": int(mix.n_atoms), "eps": eps,
                "n_checked": bounds.n_checked, "n_skipped": bounds.n_skipped,
                "rejected_in_sampling": rejected,
                "pass_rate": bounds.pass_rate})
            report["remainders"].append({
                "dim": dim, "eps": eps, "n_checked": len(points),
                "n_failed": rem_fail})

        field_fn = EfmField(atoms)
        probe_x, c = _isolated_probe(atoms)
        try:
            probe = theory.blowup_probe(field_fn, probe_x, c,
                                        deltas=[5e-3, 2e-3, 1e-3])
            report["blowup"].append({
                "dim": dim, "c": c, "t_bar": probe.t_bar,
                "all_passed": probe.all_passed})
        except ValueError as exc:
            report["blowup"].append({"dim": dim, "error": str(exc)})
        mix_lin = MixtureModel(atoms, linear_schedule())
        conc = theory.check_concentration(mix_lin, atoms[0] + 0.5,
                                          np.linspace(0.9, 0.999, 12), margin=0.05)
        report["concentration"].append({
            "dim": dim, "all_passed": conc.all_passed,
            "n_margin_invalid": conc.n_margin_invalid})

        times = np.linspace(0.0, 1.0, 101)
        straight = atoms[0][None, :] * times[:, None] \
            + (1.0 - times)[:, None] * (atoms[0] - 1.0)
        lhs, rhs, ok = theory.universal_lower_bound_check(times, straight,
                                                          atoms[0], 0.5)
        report["tail_bound"].append({"dim": dim, "lhs": lhs, "rhs": rhs,
                                     "passed": ok})

        scfg = sampler.SolverConfig(method="midpoint", steps=100,
                                    delta_cut=1e-3, seed=seed)
        traj = sampler.integrate(field_fn, 0.1 * np.ones(atoms.shape[1]), scfg)
        kpe, integral, ratio = theory.integrated_energy_density(traj, mix_lin)
        report.setdefault("integrated_energy_density", []).append({
            "dim": dim, "kpe": kpe, "neg_log_density_integral": integral,
            "ratio": ratio})

    report["all_passed"] = (
        report["linear_slopes_exact"]
        and all(b["pass_rate"] == 1.0 for b in report["bounds"])
        and all(r["n_failed"] == 0 for r in report["remainders"])
        and all(c["all_passed"] for c in report["concentration"])
        and all(b.get("all_passed", False) for b in report["blowup"])
        and all(t["passed"] for t in report["tail_bound"]))
    return report


def stage_verify(cfg: ExperimentConfig, outdir: str) -> dict:
    data = datasets.load_csv(os.path.join(outdir, "data.csv"))
    report = _theory_report({2: data.points[:50]}, [cfg.diagnostics.eps],
                            seed=cfg.dataset.seed)
    path = os.path.join(outdir, "theory_report.json")
    _write_json(path, report)
    if not report["all_passed"]:
        raise StageFailure("verify", RuntimeError("theory checks failed"))
    return {"report": path}


PIPELINE_STAGES = (
    ("gen", stage_gen, ("dataset", "solver")),
    ("train", stage_train, ("dataset", "train")),
    ("sample", stage_sample, ("dataset", "train", "solver", "kts")),
    ("diagnose", stage_diagnose, ("dataset", "train", "solver", "kts", "diagnostics")),
    ("verify", stage_verify, ("dataset", "diagnostics")),
)


def run_pipeline(cfg: ExperimentConfig, outdir: str) -> dict:
    """Execute all stages with config-hash caching; returns the manifest."""
    os.makedirs(outdir, exist_ok=True)
    lock_path = os.path.join(outdir, ".lock")
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        os.close(fd)
    except FileExistsError:
        raise StageFailure("lock", RuntimeError(
            f"output directory is locked by another run: {lock_path}"))
    try:
        full = cfg.to_dict()
        manifest = {"config_hash": config_hash(full), "version": VERSION,
                    "stages": {}}
        for name, fn, subtree in PIPELINE_STAGES:
            sub_hash = config_hash({k: full[k] for k in subtree})
            marker = os.path.join(outdir, f".stage_{name}.json")
            cached = None
            if os.path.exists(marker):
                with open(marker) as fh:
                    cached = json.load(fh)
            if (cached is not None and cached.get("hash") == sub_hash
                    and all(os.path.exists(p) for p in cached["outputs"].values())):
                manifest["stages"][name] = {"outputs": cached["outputs"],
                                            "seconds": 0.0, "skipped": True}
                continue
            start = time.perf_counter()
            try:
                outputs = fn(cfg, outdir)
            except StageFailure:
                raise
            except Exception as exc:
                raise StageFailure(name, exc)
            elapsed = time.perf_counter() - start
            with open(marker, "w") as fh:
                json.dump({"hash": sub_hash, "outputs": outputs}, fh)
            manifest["stages"][name] = {"outputs": outputs, "seconds": elapsed,
                                        "skipped": False}
        _write_json(os.path.join(outdir, "run_manifest.json"), manifest)
        return manifest
    finally:
        os.unlink(lock_path)


def kts_sweep(params: net.MlpParams, data: datasets.LabeledDataset,
              heldout_points: np.ndarray, cfg: ExperimentConfig,
              alpha_grid, beta_grid) -> list[dict]:
    """Quality / memorization / energy table over a gain grid, baseline first."""
    base = net.NeuralVelocityField(params)
    scfg = sampler.SolverConfig(method=cfg.solver.method, steps=cfg.solver.steps,
                                delta_cut=cfg.solver.delta_cut, seed=cfg.solver.seed)
    rows = []
    cells = [(0.0, 0.0)] + [(a, b) for a in alpha_grid for b in beta_grid]
    for a0, b0 in cells:
        field_fn, _ = _shaped(base, replace(cfg.kts, alpha0=a0, beta0=b0))
        trajs = sampler.sample_batch(field_fn, cfg.solver.m, scfg,
                                     tau_split=cfg.kts.tau_split)
        endpoints = np.array([t.endpoint for t in trajs])
        mem = diagnostics.f_mem(endpoints, data.points,
                                tau_gap=cfg.diagnostics.tau_gap,
                                k_mem=cfg.diagnostics.k_mem)
        w2 = diagnostics.exact_w2(endpoints, heldout_points[:len(endpoints)])
        rows.append({
            "alpha0": a0, "beta0": b0, "w2": w2, "f_mem": mem.f_mem,
            "kpe_early": float(np.mean([t.kpe_early for t in trajs])),
            "kpe_late": float(np.mean([t.kpe_late for t in trajs])),
        })
    return rows


def emit_plots(trace_files: list[str], labels: list[str], outdir: str,
               data: datasets.LabeledDataset | None = None) -> list[str]:
    """Cumulative-energy and power curves (mean with interquartile band) plus
    per-variant energy-by-stratum box summaries when a dataset is given."""
    if not trace_files:
        raise ValueError("no trace files given")
    os.makedirs(outdir, exist_ok=True)
    written = []
    cum_plot = svgplot.LinePlot(title="cumulative kinetic energy", x_label="t",
                                y_label="energy")
    pow_plot = svgplot.LinePlot(title="instantaneous power", x_label="t",
                                y_label="power", log_y=True)
    for path, label in zip(trace_files, labels):
        trajs = sampler.load_traces(path)
        ts = trajs[0]["t"]
        cum = np.stack([tr["cum_kpe"] for tr in trajs])
        power = np.stack([tr["power"] for tr in trajs])[:, 1:]
        cum_plot.add_series(label, ts, cum.mean(axis=0))
        cum_plot.add_band(label, ts, np.percentile(cum, 25, axis=0),
                          np.percentile(cum, 75, axis=0))
        pow_plot.add_series(label, ts[1:], power.mean(axis=0))
        pow_plot.add_band(label, ts[1:], np.percentile(power, 25, axis=0),
                          np.percentile(power, 75, axis=0))
        if data is not None:
            endpoints = np.array([[tr["x"][-1], tr["y"][-1]] for tr in trajs])
            kpes = np.array([tr["cum_kpe"][-1] for tr in trajs])
            d2 = ((endpoints[:, None, :] - data.points[None, :, :]) ** 2).sum(axis=2)
            strata = [data.strata[i] for i in d2.argmin(axis=1)]
            groups = {}
            for s, k in zip(strata, kpes):
                groups.setdefault(s, []).append(k)
            box_path = os.path.join(outdir, f"kpe_by_stratum_{label}.svg")
            svgplot.box_summary(box_path, f"energy by stratum ({label})",
                                {k: np.array(v) for k, v in sorted(groups.items())})
            written.append(box_path)
    cum_path = os.path.join(outdir, "cumulative_energy.svg")
    pow_path = os.path.join(outdir, "instant_power.svg")
    cum_plot.render(cum_path)
    pow_plot.render(pow_path)
    return [cum_path, pow_path] + written


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kinflow", description=__doc__)
    p.add_argument("--version", action="version", version=VERSION)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a stratified 2D dataset CSV")
    g.add_argument("--kind", required=True, choices=datasets.DATASET_KINDS)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train the MLP velocity field")
    t.add_argument("--data", required=True)
    t.add_argument("--iters", type=int, default=50_000)
    t.add_argument("--lr", type=float, default=3e-4)
    t.add_argument("--weight-decay", type=float, default=1e-4)
    t.add_argument("--batch", type=int, default=256)
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--out", required=True)
    t.add_argument("--loss-curve", default=None)

    s = sub.add_parser("sample", help="integrate trajectories and write traces")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="MLP checkpoint path")
    src.add_argument("--efm", help="dataset CSV used as closed-form atoms")
    s.add_argument("--solver", choices=("euler", "midpoint"), default="euler")
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--m", type=int, default=500)
    s.add_argument("--seed", type=int, default=5)
    s.add_argument("--alpha0", type=float, default=0.0)
    s.add_argument("--beta0", type=float, default=0.0)
    s.add_argument("--k", type=float, default=3.0)
    s.add_argument("--tau-split", type=float, default=0.6)
    s.add_argument("--delta-cut", type=float, default=None,
                   help="terminal cutoff; defaults to 0 (model) or 1e-3 (efm)")
    s.add_argument("--neighbors", type=int, default=100,
                   help="closed-form softmax truncation (efm only)")
    s.add_argument("--out", required=True, help="output directory")

    d = sub.add_parser("diagnose", help="energy/density statistics from traces")
    d.add_argument("--traces", required=True, help="directory with summary.json")
    d.add_argument("--data", required=True)
    d.add_argument("--heldout", default=None)
    d.add_argument("--k", type=int, default=50)
    d.add_argument("--bandwidth", type=float, default=0.1)
    d.add_argument("--tau-gap", type=float, default=1.0 / 3.0)
    d.add_argument("--k-mem", type=int, default=2)
    d.add_argument("--out", required=True)

    v = sub.add_parser("verify-theory", help="run the numerical bound suites")
    v.add_argument("--data", default=None, help="CSV atoms for the 2D case")
    v.add_argument("--eps", type=float, default=0.1)
    v.add_argument("--dims", default="1,2,5")
    v.add_argument("--atoms", type=int, default=50)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", required=True)

    k = sub.add_parser("kts-sweep", help="gain-grid sweep on a trained model")
    k.add_argument("--model", required=True)
    k.add_argument("--data", required=True)
    k.add_argument("--heldout", default=None)
    k.add_argument("--alpha0-grid", default="0,0.01,0.02")
    k.add_argument("--beta0-grid", default="0,0.01,0.02")
    k.add_argument("--solver", choices=("euler", "midpoint"), default="euler")
    k.add_argument("--steps", type=int, default=100)
    k.add_argument("--m", type=int, default=500)
    k.add_argument("--seed", type=int, default=5)
    k.add_argument("--out", required=True)

    r = sub.add_parser("run", help="full cached pipeline")
    r.add_argument("--config", default=None, help="JSON experiment config")
    r.add_argument("--profile", choices=("full", "ci"), default=None)
    r.add_argument("--seed", type=int, default=None, help="master seed override")
    r.add_argument("--kind", default=None, choices=datasets.DATASET_KINDS)
    r.add_argument("--out", required=True)

    pl = sub.add_parser("plot", help="render SVG energy/power plots from traces")
    pl.add_argument("--traces", required=True, help="comma-separated trace CSVs")
    pl.add_argument("--labels", default=None, help="comma-separated series labels")
    pl.add_argument("--data", default=None, help="dataset CSV for stratum boxes")
    pl.add_argument("--out", required=True, help="output directory")
    return p


def _cmd_gen_data(args) -> int:
    data = datasets.generate(args.kind, args.n, args.seed)
    datasets.save_csv(data, args.out)
    print(f"wrote {args.out} ({data.n} points, kind={data.kind})")
    return EXIT_OK


def _cmd_train(args) -> int:
    data = datasets.load_csv(args.data)
    cfg = net.TrainConfig(learning_rate=args.lr, weight_decay=args.weight_decay,
                          batch_size=args.batch, iterations=args.iters,
                          seed=args.seed)
    result = net.train(data.points, cfg)
    net.save_checkpoint(result.params, args.out)
    loss_path = args.loss_curve or (os.path.splitext(args.out)[0] + "_loss.csv")
    with open(loss_path, "w") as fh:
        fh.write("iter,loss\n")
        for i, loss in enumerate(result.losses):
            fh.write(f"{i},{loss!r}\n")
    final = result.losses[-200:].mean() if len(result.losses) else float("nan")
    print(f"wrote {args.out}; final smoothed loss {final:.4f}")
    return EXIT_OK


def _cmd_sample(args) -> int:
    if args.model:
        base = net.NeuralVelocityField(net.load_checkpoint(args.model))
        delta_cut = 0.0 if args.delta_cut is None else args.delta_cut
        label = "neural"
    else:
        data = datasets.load_csv(args.efm)
        neighbors = min(args.neighbors, len(data.points)) if args.neighbors else None
        base = EfmField(data.points, neighbors=neighbors)
        delta_cut = 1e-3 if args.delta_cut is None else args.delta_cut
        label = "efm"
    schedule = sampler.KtsSchedule(alpha0=args.alpha0, beta0=args.beta0,
                                   k=args.k, tau_split=args.tau_split)
    field_fn = sampler.shaped_field(base, schedule)
    scfg = sampler.SolverConfig(method=args.solver, steps=args.steps,
                                delta_cut=delta_cut, seed=args.seed)
    trajs = sampler.sample_batch(field_fn, args.m, scfg, tau_split=args.tau_split,
                                 meta={"field": label, "seed": args.seed,
                                       "alpha0": args.alpha0, "beta0": args.beta0})
    os.makedirs(args.out, exist_ok=True)
    sampler.save_traces(trajs, os.path.join(args.out, "traces.csv"))
    _write_json(os.path.join(args.out, "summary.json"), sampler.batch_summary(trajs))
    mean_kpe = float(np.mean([t.kpe for t in trajs]))
    print(f"wrote {args.out}/traces.csv ({args.m} trajectories, "
          f"mean energy {mean_kpe:.3f})")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    data = datasets.load_csv(args.data)
    with open(os.path.join(args.traces, "summary.json")) as fh:
        summary = json.load(fh)
    heldout = datasets.load_csv(args.heldout).points if args.heldout else None
    diag = DiagConfig(knn_k=args.k, kde_bandwidth=args.bandwidth,
                      tau_gap=args.tau_gap, k_mem=args.k_mem)
    report = _diagnose_report(summary, data, heldout, diag)
    report["config"] = asdict(diag)
    _write_json(args.out, report)
    print(f"wrote {args.out}: rho_knn={report['rho_knn']:.3f} "
          f"rho_kde={report['rho_kde']:.3f} mwu_p={report['mwu_p']:.2e} "
          f"f_mem={report['f_mem']:.3f}")
    return EXIT_OK


def _cmd_verify_theory(args) -> int:
    dims = [int(d) for d in args.dims.split(",") if d]
    rng = np.random.default_rng(args.seed)
    atoms_by_dim = {}
    for d in dims:
        if d == 2 and args.data:
            atoms_by_dim[2] = datasets.load_csv(args.data).points[:args.atoms]
        else:
            atoms_by_dim[d] = 3.0 * rng.standard_normal((args.atoms, d))
    report = _theory_report(atoms_by_dim, [args.eps], seed=args.seed)
    _write_json(args.out, report)
    status = "PASS" if report["all_passed"] else "FAIL"
    print(f"wrote {args.out}: {status}")
    return EXIT_OK if report["all_passed"] else EXIT_CHECK_FAILURE


def _cmd_kts_sweep(args) -> int:
    params = net.load_checkpoint(args.model)
    data = datasets.load_csv(args.data)
    alpha_grid = [float(v) for v in args.alpha0_grid.split(",") if v]
    beta_grid = [float(v) for v in args.beta0_grid.split(",") if v]
    if args.heldout:
        heldout = datasets.load_csv(args.heldout).points
    elif data.kind != "unknown":
        heldout = datasets.generate(data.kind, max(args.m, 10), args.seed + 1).points
    else:
        raise ValueError("--heldout is required when the dataset kind "
                         "cannot be inferred from the CSV")
    cfg = ExperimentConfig(
        solver=SolverStageConfig(method=args.solver, steps=args.steps,
                                 m=args.m, seed=args.seed))
    rows = kts_sweep(params, data, heldout, cfg, alpha_grid, beta_grid)
    with open(args.out, "w") as fh:
        fh.write("alpha0,beta0,w2,f_mem,kpe_early,kpe_late\n")
        for r in rows:
            fh.write(f"{r['alpha0']!r},{r['beta0']!r},{r['w2']!r},"
                     f"{r['f_mem']!r},{r['kpe_early']!r},{r['kpe_late']!r}\n")
    print(f"wrote {args.out} ({len(rows)} rows incl. baseline)")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = ExperimentConfig()
    if args.config:
        with open(args.config) as fh:
            cfg = ExperimentConfig.from_dict(json.load(fh))
    if args.profile:
        cfg = cfg.with_profile(args.profile)
    if args.kind:
        cfg = replace(cfg, dataset=replace(cfg.dataset, kind=args.kind))
    if args.seed is not None:
        cfg = cfg.with_master_seed(args.seed)
    manifest = run_pipeline(cfg, args.out)
    skipped = [k for k, v in manifest["stages"].items() if v["skipped"]]
    print(f"pipeline complete: config_hash={manifest['config_hash'][:12]} "
          f"skipped={skipped or 'none'}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    files = [p for p in args.traces.split(",") if p]
    labels = (args.labels.split(",") if args.labels
              else [os.path.splitext(os.path.basename(p))[0] for p in files])
    if len(labels) != len(files):
        raise ValueError("labels must match the number of trace files")
    data = datasets.load_csv(args.data) if args.data else None
    written = emit_plots(files, labels, args.out, data)
    print("wrote " + ", ".join(written))
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "sample": _cmd_sample,
    "diagnose": _cmd_diagnose,
    "verify-theory": _cmd_verify_theory,
    "kts-sweep": _cmd_kts_sweep,
    "run": _cmd_run,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE_FAILURE
    except (net.TrainingDiverged, sampler.IntegrationDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE_FAILURE


if __name__ == "__main__":
    sys.exit(main())
