"""Mini-batch training with cross-entropy plus the ADD loss, evaluation and ablations."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import geometry as geo
from .data import Dataset, epoch_batches, mixup, train_eval_split
from .errors import ConfigConflict, NonFiniteLoss
from .gradients import add_loss_hard_grad, add_loss_soft_grad
from .metrics import SCORE_NAMES, GeometryReport, geometry_report
from .model import (ModelConfig, MlpGrads, MlpParams, backward, cross_entropy,
                    forward, init_params)

log = logging.getLogger(__name__)

LOSS_MODES = ("hard", "soft", "none")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    batch_size: int = 32
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.98)
    weight_decay: float = 1e-2
    optimizer: str = "adamw"
    adam_eps: float = 1e-8
    loss_mode: str = "hard"
    weights: geo.LossWeights = field(default_factory=geo.LossWeights)
    lambda_mu: float = 1.0
    lambda_sigma_p: float = 1.0
    mixup_alpha: float = 0.0
    mixup_mode: str = "beta"
    seed: int = 0
    eval_fraction: float = 0.2

    def __post_init__(self):
        if isinstance(self.weights, (list, tuple)):
            object.__setattr__(self, "weights", geo.LossWeights(*self.weights))
        elif isinstance(self.weights, str):
            object.__setattr__(self, "weights", geo.LossWeights.parse(self.weights))
        elif isinstance(self.weights, dict):
            object.__setattr__(self, "weights", geo.LossWeights(**self.weights))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 so that pairs exist")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")
        if self.optimizer not in ("adamw", "sgd"):
            raise ValueError("optimizer must be 'adamw' or 'sgd'")
        if self.lambda_mu < 0 or self.lambda_sigma_p < 0 or self.weight_decay < 0:
            raise ValueError("loss weights and weight decay must be nonnegative")
        if self.mixup_alpha < 0:
            raise ValueError("mixup_alpha must be >= 0")
        if self.mixup_alpha > 0 and self.loss_mode == "hard":
            raise ConfigConflict("mixup produces soft labels; use loss_mode='soft'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


class Optimizer:
    """AdamW (decoupled weight decay) or heavy-ball SGD with the same decay rule."""

    def __init__(self, cfg: TrainConfig, params: MlpParams):
        self.cfg = cfg
        self.t = 0
        arrays = params.named_arrays()
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()} if cfg.optimizer == "adamw" else None

    def step(self, params: MlpParams, grads: MlpGrads) -> None:
        cfg = self.cfg
        self.t += 1
        b1, b2 = cfg.betas
        lr = cfg.learning_rate
        for name, p in params.named_arrays().items():
            g = grads.arrays[name]
            if cfg.weight_decay:
                p *= 1.0 - lr * cfg.weight_decay
            m = self.m[name]
            if cfg.optimizer == "adamw":
                v = self.v[name]
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                m_hat = m / (1.0 - b1 ** self.t)
                v_hat = v / (1.0 - b2 ** self.t)
                p -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
            else:
                m *= b1
                m += g
                p -= lr * m


@dataclass
class StepLoss:
    ce: float
    add: float
    total: float
    terms: dict


def _add_terms(cfg: TrainConfig, raw: np.ndarray, labels: np.ndarray):
    """ADD value, its per-term breakdown and dL/d(raw) for one batch."""
    if cfg.loss_mode == "none" or raw.shape[0] < 2:
        return 0.0, {}, None
    if cfg.loss_mode == "hard":
        batch = geo.Batch.from_raw(raw, labels)
        _, stats = geo.add_loss_hard(batch, cfg.weights)
        loss, grad = add_loss_hard_grad(raw, labels, cfg.weights)
        w = cfg.weights
        terms = {"mu_p": w.lambda_mu_p * stats.mu_p, "sigma_p": w.lambda_sigma_p * stats.sigma_p,
                 "mu_n": w.lambda_mu_n * stats.mu_n, "sigma_n": w.lambda_sigma_n * stats.sigma_n}
        return loss, terms, grad
    batch = geo.Batch.from_raw(raw, labels)
    l_mu = geo.l_mu_soft(batch)
    _, sigma_p = geo.moments(geo.soft_positive_values(batch))
    loss, grad = add_loss_soft_grad(raw, labels, cfg.lambda_mu, cfg.lambda_sigma_p)
    return loss, {"l_mu": cfg.lambda_mu * l_mu, "sigma_p": cfg.lambda_sigma_p * sigma_p}, grad


@dataclass
class RunRecord:
    config: dict
    model_config: dict
    seed: int
    epochs: list[dict]
    steps: list[StepLoss]
    final_accuracy: float
    geometry: GeometryReport | None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "model_config": self.model_config,
            "seed": self.seed,
            "epochs": self.epochs,
            "steps": [asdict(s) for s in self.steps],
            "final_accuracy": self.final_accuracy,
            "geometry": self.geometry.to_dict() if self.geometry is not None else None,
        }


def evaluate(params: MlpParams, dataset: Dataset) -> tuple[float, GeometryReport | None]:
    """Accuracy (argmax of logits vs argmax of label) and the embedding report.

    Classes with fewer than two rows in ``dataset`` are left out of the report;
    the report is ``None`` when no class qualifies.
    """
    trace = forward(params, dataset.features)
    pred = np.argmax(trace.logits, axis=1)
    truth = dataset.class_ids
    accuracy = float(np.mean(pred == truth))
    ids, counts = np.unique(truth, return_counts=True)
    keep = ids[counts >= 2]
    report = geometry_report(trace.z, truth, classes=keep.tolist()) if keep.size else None
    return accuracy, report


def train(dataset: Dataset, model_cfg: ModelConfig,
          train_cfg: TrainConfig) -> tuple[MlpParams, RunRecord]:
    cfg = train_cfg
    ss = np.random.SeedSequence(cfg.seed)
    init_rng, shuffle_rng, mix_rng = (np.random.default_rng(s) for s in ss.spawn(3))

    train_set, eval_set = train_eval_split(dataset, cfg.eval_fraction, cfg.seed)
    params = init_params(model_cfg, dataset.dim, dataset.n_classes, init_rng)
    opt = Optimizer(cfg, params)

    steps: list[StepLoss] = []
    epochs = []
    step = 0
    for epoch in range(cfg.epochs):
        first = len(steps)
        for idx in epoch_batches(len(train_set), cfg.batch_size, shuffle_rng):
            if cfg.mixup_alpha > 0:
                partner = idx[mix_rng.permutation(idx.size)]
                mixed = mixup(idx, partner, train_set, cfg.mixup_alpha, mix_rng, cfg.mixup_mode)
                x, y = mixed.features, mixed.labels
            else:
                x, y = train_set.features[idx], train_set.labels[idx]

            trace = forward(params, x)
            ce, dlogits = cross_entropy(trace.probs, y)
            add, terms, d_emb = _add_terms(cfg, trace.raw, y)
            total = ce + add
            if not math.isfinite(total):
                raise NonFiniteLoss(step)
            steps.append(StepLoss(ce, add, total, terms))
            opt.step(params, backward(params, trace, dlogits, d_emb))
            step += 1

        chunk = steps[first:]
        row = {
            "epoch": epoch,
            "ce": float(np.mean([s.ce for s in chunk])),
            "add": float(np.mean([s.add for s in chunk])),
            "total": float(np.mean([s.total for s in chunk])),
        }
        if eval_set is not None:
            row["eval_accuracy"] = evaluate(params, eval_set)[0]
        epochs.append(row)
        log.debug("epoch %d: %s", epoch, row)

    accuracy, report = evaluate(params, eval_set if eval_set is not None else train_set)
    record = RunRecord(
        config=cfg.to_dict(),
        model_config=asdict(model_cfg) | {"hidden": list(model_cfg.hidden)},
        seed=cfg.seed,
        epochs=epochs,
        steps=steps,
        final_accuracy=accuracy,
        geometry=report,
    )
    return params, record


# ablations ---------------------------------------------------------------

@dataclass
class AblationRow:
    tag: str
    seed: int
    accuracy: float
    scores: dict
    record: RunRecord


@dataclass
class AblationTable:
    rows: list[AblationRow]

    def tags(self) -> list[str]:
        return list(dict.fromkeys(r.tag for r in self.rows))

    def summary(self) -> dict[str, dict]:
        """Per-tag mean and sample std (n - 1) of accuracy and of each score."""
        out = {}
        for tag in self.tags():
            rows = [r for r in self.rows if r.tag == tag]
            entry = {"runs": len(rows)}
            for key in ("accuracy", *SCORE_NAMES):
                vals = [r.accuracy if key == "accuracy" else r.scores[key] for r in rows]
                mean, std = geo.moments(vals)
                entry[key] = {"mean": mean, "std": std}
            out[tag] = entry
        return out

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "seed", "accuracy", *SCORE_NAMES])
            for r in self.rows:
                w.writerow([r.tag, r.seed, repr(r.accuracy),
                            *(repr(float(r.scores[k])) for k in SCORE_NAMES)])


def _one_run(args):
    dataset, model_cfg, cfg = args
    _, record = train(dataset, model_cfg, cfg)
    return record


def ablation_sweep(dataset: Dataset, model_cfg: ModelConfig, base_cfg: TrainConfig,
                   lambda_set, seeds, workers: int = 1) -> AblationTable:
    """Train one model per (weights, seed) pair, in that nesting order.

    Runs are independent, so ``workers > 1`` farms them out to processes;
    results are assembled in the same order either way.
    """
    lambda_set = [w if isinstance(w, geo.LossWeights) else geo.LossWeights.parse(w)
                  for w in lambda_set]
    seeds = list(seeds)
    if not lambda_set or not seeds:
        raise ValueError("need at least one weight configuration and one seed")
    jobs = [(w, s) for w in lambda_set for s in seeds]
    args = [(dataset, model_cfg, replace(base_cfg, loss_mode="hard", weights=w, seed=s))
            for w, s in jobs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_one_run, args))
    else:
        records = [_one_run(a) for a in args]
    rows = [AblationRow(w.tag, s, rec.final_accuracy,
                        rec.geometry.scores() if rec.geometry else {k: math.nan for k in SCORE_NAMES},
                        rec)
            for (w, s), rec in zip(jobs, records)]
    return AblationTable(rows)
