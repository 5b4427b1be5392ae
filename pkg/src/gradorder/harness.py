"""Experiment driver: JSON configs in, trace CSVs, summaries and bound reports out.

A config names one dataset, one loss family and one algorithm, then a list
of ordering strategies and seeds. Every (strategy, seed) pair is one
training run; all strategies under a seed share the same model instance and
the same initial parameters. Synthetic data is regenerated per seed, CSV
data is loaded once.

Trace CSV columns: ``epoch, iteration, loss, dist_sq, step_size`` with floats
written via ``repr`` (``dist_sq`` is empty when no minimiser was computed).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .bounds import BoundInputs, bound_thm1, bound_thm2, bound_thm3, bound_thm4, epsilon_k, find_minimizer
from .core import ScheduleKind, StepSchedule
from .data import Dataset, TargetKind, gen_synthetic, load_csv, minmax_scale
from .losses import FiniteSumLoss, GradCapTracker, LinRegQuarticLoss, SyntheticAnchorLoss
from .mlp import DenseNet, SoftmaxClassifierLoss
from .optimizer import Algorithm, DivergenceError, TrainConfig, TrainResult, train
from .ordering import LogitScore, OrderingStrategy

TRACE_COLUMNS = ("epoch", "iteration", "loss", "dist_sq", "step_size")


class LossFamily(str, Enum):
    QUARTIC_QUADRATIC = "quartic_quadratic"
    INDICATOR = "indicator"
    LINREG_QUARTIC = "linreg_quartic"
    MLP = "mlp"


class XStarMode(str, Enum):
    NONE = "none"
    PRECOMPUTE = "precompute"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSpec:
    """``source`` is ``"synthetic"`` or a CSV path (relative paths resolve
    against the config file's directory)."""

    source: str = "synthetic"
    n: int = 32
    dim: int = 2
    low: float = -10.0
    high: float = 10.0
    target_column: str | None = None
    target_kind: str = "none"
    max_rows: int | None = None
    scale: str = "none"

    def __post_init__(self) -> None:
        if self.scale not in ("none", "minmax"):
            raise ConfigError(f"data.scale must be 'none' or 'minmax', got {self.scale!r}")
        TargetKind(self.target_kind)

    @property
    def synthetic(self) -> bool:
        return self.source == "synthetic"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    data: DataSpec
    loss: LossFamily
    algorithm: Algorithm
    strategies: tuple[str, ...]
    seeds: tuple[int, ...]
    schedule: StepSchedule
    epochs: int
    warm_start_epochs: int = 0
    warm_start_schedule: StepSchedule | None = None
    batch_size: int | None = None
    batch_fraction: float | None = None
    select_count: int | None = None
    select_fraction: float | None = None
    grad_scale: float = 1e-10
    hidden: tuple[int, ...] = (128,)
    logit_score: LogitScore = LogitScore.LOSS
    x0: Any = None
    x_star: XStarMode = XStarMode.NONE
    bounds: tuple[str, ...] | None = None
    bound_tol: float = 1e-9
    cap_margin: float = 1.1
    output_dir: str = "runs"

    def __post_init__(self) -> None:
        object.__setattr__(self, "loss", LossFamily(self.loss))
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        object.__setattr__(self, "logit_score", LogitScore(self.logit_score))
        object.__setattr__(self, "x_star", XStarMode(self.x_star))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.strategies or not self.seeds:
            raise ConfigError("need at least one strategy and one seed")
        for s in self.strategies:
            OrderingStrategy(s)
        if self.batch_size is not None and self.batch_fraction is not None:
            raise ConfigError("give batch_size or batch_fraction, not both")
        if self.select_count is not None and self.select_fraction is not None:
            raise ConfigError("give select_count or select_fraction, not both")
        if self.bounds is not None:
            bad = set(self.bounds) - set(BOUNDS)
            if bad:
                raise ConfigError(f"unknown bounds {sorted(bad)}")
            object.__setattr__(self, "bounds", tuple(self.bounds))

    def train_config(self, strategy: str, seed: int, n: int) -> TrainConfig:
        S = self.batch_size
        if self.batch_fraction is not None:
            S = max(1, round(self.batch_fraction * n))
        q = self.select_count
        if self.select_fraction is not None:
            if S is None:
                raise ConfigError("select_fraction needs a batch size")
            q = max(1, round(self.select_fraction * S))
        return TrainConfig(
            algorithm=self.algorithm,
            strategy=OrderingStrategy(strategy, seed=seed, logit_score=self.logit_score),
            schedule=self.schedule,
            epochs=self.epochs,
            batch_size=S,
            select_count=q,
            warm_start_epochs=self.warm_start_epochs,
            warm_start_schedule=self.warm_start_schedule,
        )


def _schedule(raw) -> StepSchedule:
    if not isinstance(raw, dict) or set(raw) - {"kind", "alpha0"} or "alpha0" not in raw:
        raise ConfigError(f"schedule must be an object with 'kind' and 'alpha0', got {raw!r}")
    return StepSchedule(ScheduleKind(raw.get("kind", "constant")), float(raw["alpha0"]))


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    raw = dict(raw)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = {"name", "data", "loss", "algorithm", "strategies", "seeds", "schedule", "epochs"} - set(raw)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    data = dict(raw["data"])
    data_keys = {f.name for f in fields(DataSpec)}
    if set(data) - data_keys:
        raise ConfigError(f"unknown data keys: {sorted(set(data) - data_keys)}")
    if base_dir is not None and data.get("source", "synthetic") != "synthetic":
        src = Path(data["source"])
        data["source"] = str(src if src.is_absolute() else base_dir / src)
    try:
        raw["data"] = DataSpec(**data)
        raw["schedule"] = _schedule(raw["schedule"])
        if raw.get("warm_start_schedule") is not None:
            raw["warm_start_schedule"] = _schedule(raw["warm_start_schedule"])
        return ExperimentConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return config_from_dict(raw, base_dir=path.parent)


# -- model construction -------------------------------------------------------


def _load_dataset(spec: DataSpec, seed: int) -> Dataset:
    if spec.synthetic:
        data = gen_synthetic(seed, spec.n, spec.dim, spec.low, spec.high)
    else:
        path = Path(spec.source)
        if not path.exists():
            raise FileNotFoundError(f"dataset not found: {path}")
        data = load_csv(path, spec.target_column, spec.target_kind, spec.max_rows)
    return minmax_scale(data) if spec.scale == "minmax" else data


def build_model(config: ExperimentConfig, data: Dataset) -> FiniteSumLoss:
    family = config.loss
    if family in (LossFamily.QUARTIC_QUADRATIC, LossFamily.INDICATOR):
        return SyntheticAnchorLoss(data.features, family.value)
    if data.targets is None:
        raise ConfigError(f"loss {family.value} needs a target column")
    if family is LossFamily.LINREG_QUARTIC:
        return LinRegQuarticLoss(data.features, data.targets.astype(np.float64), config.grad_scale)
    if data.target_kind is not TargetKind.CLASSIFICATION:
        raise ConfigError("mlp loss needs target_kind 'classification'")
    dims = (data.dim, *config.hidden, data.n_classes)
    return SoftmaxClassifierLoss(dims, data.features, data.targets)


def initial_point(config: ExperimentConfig, model: FiniteSumLoss, seed: int) -> np.ndarray:
    """Shared starting point of every strategy under ``seed``."""
    x0 = config.x0
    if x0 is None:
        x0 = "init" if config.loss is LossFamily.MLP else "zeros"
    if x0 == "zeros":
        return np.zeros(model.dim)
    if x0 == "init":
        if not isinstance(model, SoftmaxClassifierLoss):
            raise ConfigError("x0 'init' is only defined for the mlp loss")
        return DenseNet.init(model.layer_dims, seed).params.copy()
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (model.dim,):
        raise ConfigError(f"x0 has {x0.size} entries, model needs {model.dim}")
    return x0


@dataclass
class Instance:
    seed: int
    model: FiniteSumLoss
    x0: np.ndarray
    x_star: np.ndarray | None = None


def instances(config: ExperimentConfig):
    """Yield one :class:`Instance` per seed."""
    shared = None if config.data.synthetic else _load_dataset(config.data, 0)
    for seed in config.seeds:
        data = shared if shared is not None else _load_dataset(config.data, seed)
        model = build_model(config, data)
        inst = Instance(seed, model, initial_point(config, model, seed))
        if config.x_star is XStarMode.PRECOMPUTE:
            inst.x_star = find_minimizer(model, inst.x0)
        yield inst


# -- running ------------------------------------------------------------------


def trace_name(strategy: str, seed: int) -> str:
    return f"{strategy}_seed{seed}.csv"


def write_trace(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in records:
            dist = "" if r.dist_sq is None else repr(float(r.dist_sq))
            w.writerow((r.epoch, r.iteration, repr(float(r.loss)), dist, repr(float(r.step_size))))


def read_trace(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "epoch": int(row["epoch"]),
                    "iteration": int(row["iteration"]),
                    "loss": float(row["loss"]),
                    "dist_sq": float(row["dist_sq"]) if row["dist_sq"] else None,
                    "step_size": float(row["step_size"]),
                }
            )
    return rows


def epoch_end_losses(rows) -> list[float]:
    last: dict[int, float] = {}
    for r in rows:
        last[r["epoch"]] = r["loss"]
    return [last[k] for k in sorted(last)]


def _finite(v: float) -> float | None:
    return v if math.isfinite(v) else None


def run_one(config: ExperimentConfig, inst: Instance, strategy: str) -> tuple[dict, list, TrainResult | None]:
    tc = config.train_config(strategy, inst.seed, inst.model.n)
    initial = inst.model.objective(inst.x0)
    record = {"experiment": config.name, "strategy": strategy, "seed": inst.seed, "initial_loss": initial}
    try:
        result = train(inst.model, inst.x0, tc, inst.x_star)
    except DivergenceError as exc:
        losses = epoch_end_losses([{"epoch": r.epoch, "loss": r.loss} for r in exc.records])
        record.update(
            epoch_end_losses=losses,
            final_loss=None,
            status="diverged",
            diverged_at={"epoch": exc.epoch, "iteration": exc.iteration},
        )
        return record, exc.records, None
    losses = result.epoch_end_losses()
    record.update(epoch_end_losses=losses, final_loss=losses[-1] if losses else initial, status="ok")
    if isinstance(inst.model, SoftmaxClassifierLoss):
        record["train_accuracy"] = inst.model.accuracy(result.x_final)
    return record, result.records, result


def _means(config: ExperimentConfig, runs: list[dict]) -> dict:
    out = {}
    for s in config.strategies:
        ok = [r for r in runs if r["strategy"] == s and r["status"] == "ok"]
        entry = {"runs": len(ok), "diverged": sum(r["strategy"] == s and r["status"] != "ok" for r in runs)}
        if ok:
            entry["final_loss"] = float(np.mean([r["final_loss"] for r in ok]))
            entry["epoch_end_losses"] = np.mean([r["epoch_end_losses"] for r in ok], axis=0).tolist()
            if "train_accuracy" in ok[0]:
                entry["train_accuracy"] = float(np.mean([r["train_accuracy"] for r in ok]))
        out[s] = entry
    return out


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Train every (strategy, seed) pair; write traces and ``summary.json``
    under ``out_dir`` when given. Returns the summary."""
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    runs = []
    for inst in instances(config):
        for strategy in config.strategies:
            record, records, _ = run_one(config, inst, strategy)
            runs.append(record)
            if out is not None:
                write_trace(records, out / trace_name(strategy, inst.seed))
    summary = {
        "experiment": config.name,
        "config": config_to_dict(config),
        "runs": runs,
        "means": _means(config, runs),
        "all_diverged": all(r["status"] != "ok" for r in runs),
    }
    if out is not None:
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")
    return summary


# -- bound verification ---------------------------------------------------------

BOUNDS = {"thm1": bound_thm1, "thm2": bound_thm2, "thm3": bound_thm3, "thm4": bound_thm4}
_NEEDS_STRONG = {"thm1", "thm2"}
_DECREASING = {"thm1", "thm3"}


def applicable_bounds(model: FiniteSumLoss, schedule: StepSchedule) -> dict[str, bool]:
    """Which bounds hold for this loss and schedule (per-epoch steps are
    constant within the epoch, so they fall under the constant-step bounds)."""
    per_iter = schedule.kind is ScheduleKind.PER_ITERATION
    out = {}
    for name in BOUNDS:
        ok = (name in _DECREASING) == per_iter
        if name in _NEEDS_STRONG and model.strong_convexity is None:
            ok = False
        out[name] = ok
    return out


def harvest_bound_inputs(model: FiniteSumLoss, result: TrainResult, x_star, schedule: StepSchedule,
                         first_epoch: int = 0, cap_margin: float = 1.1, restart: bool = False):
    """Per-epoch :class:`BoundInputs` and measured next-epoch distance for a
    full-ordering run.

    ``M`` are the gradient norms at the epoch start in visit order, ``M'`` the
    norms of the gradients actually applied, caps are running maxima over
    everything observed up to the end of the epoch. ``restart`` says the
    schedule counters restarted at ``first_epoch``.
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    n = model.n
    by_epoch: dict[int, list] = {}
    for r in result.records:
        by_epoch.setdefault(r.epoch, []).append(r)
    caps = GradCapTracker(n, margin=cap_margin)
    m = np.full(n, model.strong_convexity if model.strong_convexity is not None else 0.0)
    out = []
    for k in sorted(by_epoch):
        recs = by_epoch[k]
        x_k = result.epoch_iterates[k]
        start = model.grad_norms(x_k)
        visit = np.array([r.indices[0] for r in recs])
        M_prime = np.array([r.grad_norm for r in recs])
        caps.observe(np.arange(n), start)
        caps.observe(visit, M_prime)
        if k < first_epoch:
            continue
        alphas = np.array([r.step_size for r in recs])
        if k + 1 in by_epoch:
            alpha_k1 = by_epoch[k + 1][0].step_size
        else:
            local_epoch = k + 1 - (first_epoch if restart else 0)
            alpha_k1 = schedule.at(local_epoch * n, local_epoch)
        inp = BoundInputs(
            dist_sq_k=float(np.sum((x_k - x_star) ** 2)),
            M=start[visit],
            M_prime=M_prime,
            C=caps.caps[visit],
            m=m[visit],
            alphas=alphas,
            alpha_k=float(alphas[0]),
            alpha_k1=float(alpha_k1),
            eps_k=epsilon_k(model, x_k, x_star),
        )
        measured = float(np.sum((result.epoch_iterates[k + 1] - x_star) ** 2))
        out.append((k, inp, measured))
    return out


def run_bound_check(config: ExperimentConfig, out_dir=None) -> dict:
    """Evaluate the applicable bounds epoch by epoch against measured distances."""
    if config.algorithm is not Algorithm.FULL_ORDERING:
        raise ConfigError("bound-check needs algorithm 'full_ordering'")
    if config.loss is LossFamily.MLP:
        raise ConfigError("bound-check needs a convex loss family")
    if config.x_star is not XStarMode.PRECOMPUTE:
        config = replace(config, x_star=XStarMode.PRECOMPUTE)
    report_runs = []
    totals: dict[str, list[int]] = {}
    for inst in instances(config):
        gate = applicable_bounds(inst.model, config.schedule)
        wanted = config.bounds or tuple(BOUNDS)
        for strategy in config.strategies:
            tc = config.train_config(strategy, inst.seed, inst.model.n)
            result = train(inst.model, inst.x0, tc, inst.x_star)
            harvested = harvest_bound_inputs(
                inst.model, result, inst.x_star, config.schedule,
                first_epoch=config.warm_start_epochs, cap_margin=config.cap_margin,
                restart=config.warm_start_schedule is not None and config.warm_start_epochs > 0,
            )
            epochs = []
            for k, inp, measured in harvested:
                bounds = {}
                for name in wanted:
                    if not gate[name]:
                        bounds[name] = "not applicable"
                        continue
                    value = BOUNDS[name](inp)
                    passed = bool(measured <= value + config.bound_tol)
                    bounds[name] = {"bound": value, "pass": passed}
                    totals.setdefault(name, [0, 0])
                    totals[name][0] += passed
                    totals[name][1] += 1
                epochs.append(
                    {"epoch": k, "dist_sq_k": inp.dist_sq_k, "dist_sq_next": measured,
                     "eps_k": inp.eps_k, "alpha_k": inp.alpha_k, "alpha_k1": inp.alpha_k1, "bounds": bounds}
                )
            report_runs.append({"strategy": strategy, "seed": inst.seed,
                                "x_star": inst.x_star.tolist(), "epochs": epochs})
    report = {
        "experiment": config.name,
        "runs": report_runs,
        "pass_rate": {name: (p / t if t else None) for name, (p, t) in totals.items()},
        "checked": {name: t for name, (_, t) in totals.items()},
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bound_report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return report


# -- comparison of finished runs ---------------------------------------------------


def compare(dirs) -> list[dict]:
    """Per directory and strategy: runs, mean final loss, and how often the
    strategy had the lowest final loss among strategies sharing a seed.

    Everything is recomputed from the trace CSVs; ``summary.json`` is only
    consulted for the experiment name and divergence status.
    """
    rows = []
    for d in map(Path, dirs):
        traces = sorted(d.glob("*_seed*.csv"))
        if not traces:
            raise FileNotFoundError(f"no trace files in {d}")
        status = {}
        name = d.name
        if (d / "summary.json").exists():
            with open(d / "summary.json", encoding="utf-8") as fh:
                summary = json.load(fh)
            name = summary.get("experiment", name)
            status = {(r["strategy"], r["seed"]): r["status"] for r in summary.get("runs", [])}
        finals: dict[str, dict[int, float]] = {}
        for path in traces:
            strategy, seed = path.stem.rsplit("_seed", 1)
            trace = read_trace(path)
            if status.get((strategy, int(seed)), "ok") != "ok" or not trace:
                continue
            finals.setdefault(strategy, {})[int(seed)] = trace[-1]["loss"]
        best = {s: 0 for s in finals}
        seeds = set().union(*(v.keys() for v in finals.values())) if finals else set()
        for seed in seeds:
            here = {s: v[seed] for s, v in finals.items() if seed in v}
            if len(here) > 1:
                best[min(here, key=lambda s: (here[s], s))] += 1
        for s, v in sorted(finals.items()):
            rows.append({"experiment": name, "dir": str(d), "strategy": s, "runs": len(v),
                         "mean_final_loss": float(np.mean(list(v.values()))), "best_count": best[s]})
    return rows


def config_to_dict(config: ExperimentConfig) -> dict:
    out = asdict(config)
    for key in ("schedule", "warm_start_schedule"):
        sched = getattr(config, key)
        out[key] = None if sched is None else {"kind": sched.kind.value, "alpha0": sched.alpha0}
    for key, value in out.items():
        if isinstance(value, Enum):
            out[key] = value.value
    return out
