"""Seeded reproductions: escape demos, the eigenvalue Monte Carlo, and the learning-rate sweep."""
from __future__ import annotations

import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import io
from .analysis import endpoint_flatness
from .errors import NonFinite
from .optim import Method, OptimizerConfig, Status, TrajectoryRecord, run
from .rng import SplitMix64, derive_seed
from .surfaces import COMPLEX_SIM, EIG_ROUND, FILTER_SIM, Surface
from .vdm import ArctanPower, DeformationSpec, Identity, LogExp


@dataclass(frozen=True)
class DemoSetup:
    surface: Surface
    config: OptimizerConfig
    p0: tuple
    vdm: DeformationSpec


# The escape demo uses momentum; the complex-case deformation is LE(1, 0.9).
ESCAPE_DEMOS = {
    "fig1": DemoSetup(FILTER_SIM, OptimizerConfig(Method.GDM, 0.02, 0.9, (), 0.1, 400), (-9.5, -10.0), ArctanPower(10, 1, 1, 1)),
    "complex": DemoSetup(COMPLEX_SIM, OptimizerConfig(Method.GDM, 0.02, 0.9, (), 0.1, 100), (-6.0, 11.0), LogExp(1, 0.9)),
}

EIGEN_MC_CONFIG = OptimizerConfig(Method.GD, 0.2, 0.0, (150, 225), 0.1, 300)
EIGEN_MC_BOX = (-10.0, 10.0)


def _flatness(surface, record: TrajectoryRecord):
    try:
        return endpoint_flatness(surface, record.final_params)
    except NonFinite:
        return {"lambda_max": float("nan"), "lambda_min": float("nan"), "trace": float("nan")}


@dataclass
class EscapeDemo:
    variant: str
    setup: DemoSetup
    original: TrajectoryRecord
    deformed: TrajectoryRecord
    flatness_original: dict
    flatness_deformed: dict

    @property
    def endpoint_distance(self):
        return float(np.linalg.norm(self.original.final_params - self.deformed.final_params))

    def summary(self):
        arm = lambda rec, flat: {
            "final_params": rec.final_params,
            "final_loss": rec.final_loss,
            "status": rec.status.value,
            "steps": len(rec) - 1,
            **flat,
        }
        return {
            "variant": self.variant,
            "surface": self.setup.surface.name,
            "config": self.setup.config.to_dict(),
            "p0": list(self.setup.p0),
            "vdm": self.setup.vdm.to_string(),
            "original": arm(self.original, self.flatness_original),
            "deformed": arm(self.deformed, self.flatness_deformed),
            "endpoint_distance": self.endpoint_distance,
        }


def run_escape_demo(variant: str, vdm=None, lr=None, steps=None, p0=None) -> EscapeDemo:
    """Run the original (identity) arm and the deformed arm from the same start.

    Overrides replace the deformed arm's VDM, the learning rate, the step
    budget, or the start point.
    """
    try:
        setup = ESCAPE_DEMOS[variant]
    except KeyError:
        raise KeyError(f"unknown demo {variant!r}; choose from {sorted(ESCAPE_DEMOS)}") from None
    cfg = setup.config
    if lr is not None or steps is not None:
        cfg = OptimizerConfig(cfg.method, lr or cfg.lr, cfg.momentum, cfg.milestones, cfg.gamma, steps or cfg.max_steps)
    setup = DemoSetup(setup.surface, cfg, tuple(p0) if p0 is not None else setup.p0, vdm or setup.vdm)
    original = run(cfg, setup.surface, Identity(), setup.p0)
    deformed = run(cfg, setup.surface, setup.vdm, setup.p0)
    return EscapeDemo(
        variant, setup, original, deformed, _flatness(setup.surface, original), _flatness(setup.surface, deformed)
    )


@dataclass(frozen=True)
class ArmResult:
    p_final: np.ndarray
    loss_final: float
    lambda_max: float
    lambda_min: float
    status: str

    @property
    def ok(self):
        return self.status == Status.COMPLETED.value


@dataclass(frozen=True)
class RoundResult:
    index: int
    seed: int
    p0: np.ndarray
    original: ArmResult
    deformed: ArmResult


def _arm(surface, config, vdm, p0):
    rec = run(config, surface, vdm, p0)
    flat = _flatness(surface, rec)
    return ArmResult(rec.final_params, rec.final_loss, flat["lambda_max"], flat["lambda_min"], rec.status.value)


MC_HEADER = ["round", "seed", "p1_0", "p2_0", "arm", "p1_final", "p2_final", "loss_final", "lambda_max", "lambda_min"]


@dataclass
class MonteCarloReport:
    master_seed: int
    vdm: DeformationSpec
    config: OptimizerConfig
    surface: str
    rounds: list = field(default_factory=list)

    def arm(self, name):
        return [getattr(r, name) for r in self.rounds]

    def aggregates(self, name):
        ok = [a for a in self.arm(name) if a.ok]
        lmax = [a.lambda_max for a in ok]
        lmin = [a.lambda_min for a in ok]
        nan = float("nan")
        return {
            "n_ok": len(ok),
            "n_excluded": len(self.rounds) - len(ok),
            "median_lambda_max": statistics.median(lmax) if ok else nan,
            "mean_lambda_max": statistics.fmean(lmax) if ok else nan,
            "median_lambda_min": statistics.median(lmin) if ok else nan,
            "mean_lambda_min": statistics.fmean(lmin) if ok else nan,
            "median_loss_final": statistics.median(a.loss_final for a in ok) if ok else nan,
        }

    def rows(self):
        for r in self.rounds:
            for name in ("original", "deformed"):
                a = getattr(r, name)
                yield [r.index, r.seed, r.p0[0], r.p0[1], name, a.p_final[0], a.p_final[1],
                       a.loss_final, a.lambda_max, a.lambda_min]

    def to_csv(self, path):
        io.write_csv(path, MC_HEADER, self.rows())

    def to_json(self):
        return {
            "master_seed": self.master_seed,
            "surface": self.surface,
            "vdm": self.vdm.to_string(),
            "config": self.config.to_dict(),
            "n_rounds": len(self.rounds),
            "aggregates": {"original": self.aggregates("original"), "deformed": self.aggregates("deformed")},
            "rounds": [
                {
                    "round": r.index,
                    "seed": r.seed,
                    "p0": r.p0,
                    **{
                        name: {
                            "p_final": getattr(r, name).p_final,
                            "loss_final": getattr(r, name).loss_final,
                            "lambda_max": getattr(r, name).lambda_max,
                            "lambda_min": getattr(r, name).lambda_min,
                            "status": getattr(r, name).status,
                        }
                        for name in ("original", "deformed")
                    },
                }
                for r in self.rounds
            ],
        }


def uniform_start(seed, dim=2, box=EIGEN_MC_BOX):
    rng = SplitMix64(seed)
    return np.array([box[0] + (box[1] - box[0]) * rng.uniform() for _ in range(dim)])


def run_eigen_montecarlo(
    n_rounds=100, master_seed=0, vdm: DeformationSpec | None = None, threads=1,
    surface=EIG_ROUND, config=EIGEN_MC_CONFIG, original_vdm: DeformationSpec | None = None,
) -> MonteCarloReport:
    """Paired rounds of plain GD from uniform starts; eigenvalues taken on the original surface.

    Both arms of a round share one start point. Round r draws its start from
    ``derive_seed(master_seed, r)``, so results do not depend on ``threads``.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be at least 1")
    vdm = vdm or LogExp(1, 0.99)
    original_vdm = original_vdm or Identity()

    def one(r):
        seed = derive_seed(master_seed, r)
        p0 = uniform_start(seed)
        return RoundResult(r, seed, p0, _arm(surface, config, original_vdm, p0), _arm(surface, config, vdm, p0))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rounds = list(pool.map(one, range(n_rounds)))
    else:
        rounds = [one(r) for r in range(n_rounds)]
    return MonteCarloReport(master_seed, vdm, config, surface.name, rounds)


SWEEP_HEADER = ["arm", "init", "multiplier", "vdm", "lr", "p1_final", "p2_final", "loss_final", "lambda_max", "lambda_min", "status"]


@dataclass
class SweepResult:
    rows: list
    trajectories: dict  # (arm label, init index) -> TrajectoryRecord

    def to_csv(self, path):
        io.write_csv(path, SWEEP_HEADER, ([row[k] for k in SWEEP_HEADER] for row in self.rows))


def run_lr_equivalence_sweep(
    surface=EIG_ROUND, multipliers=(0.5, 1.0, 2.0), vdms=(LogExp(1, 0.99),), n_inits=20,
    master_seed=0, base_config=EIGEN_MC_CONFIG, threads=1,
) -> SweepResult:
    """Identity at ``eta * multiplier`` against each VDM at the base ``eta``, from shared starts."""
    arms = []
    for m in multipliers:
        cfg = OptimizerConfig(base_config.method, base_config.lr * m, base_config.momentum,
                              base_config.milestones, base_config.gamma, base_config.max_steps)
        arms.append((f"lr x{m!r}", m, Identity(), cfg))
    for v in vdms:
        arms.append((v.to_string(), 1.0, v, base_config))
    jobs = [(a, i) for i in range(n_inits) for a in arms]

    def one(job):
        (label, m, vdm, cfg), i = job
        p0 = uniform_start(derive_seed(master_seed, i), surface.dim)
        rec = run(cfg, surface, vdm, p0)
        return label, i, m, vdm, cfg, rec

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    rows, trajectories = [], {}
    for label, i, m, vdm, cfg, rec in results:
        flat = _flatness(surface, rec)
        trajectories[(label, i)] = rec
        rows.append({
            "arm": label, "init": i, "multiplier": m, "vdm": vdm.to_string(), "lr": cfg.lr,
            "p1_final": rec.final_params[0], "p2_final": rec.final_params[-1],
            "loss_final": rec.final_loss, "lambda_max": flat["lambda_max"], "lambda_min": flat["lambda_min"],
            "status": rec.status.value,
        })
    return SweepResult(rows, trajectories)
