"""Long-tailed evaluation metrics and experiment harnesses.

Per-class average precision with head/medium/tail group means, Acc@1 and
Acc@5 for multi-label data, an ablation harness over expert subsets, and a
lambda sensitivity sweep.
"""

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .data import HEAD, MEDIUM, TAIL
from .model import EXPERT_KINDS, INVERSE, LONG_TAILED, UNIFORM, forward_inference
from .training import train


def average_precision(scores, positives):
    """Non-interpolated AP of one class's sample ranking.

    Samples are ranked by score descending, ties broken by sample index
    ascending; AP = (1/P) * sum over positive ranks of precision at rank.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise ValueError("average_precision needs at least one positive sample")
    order = np.lexsort((np.arange(len(scores)), -scores))
    hits = positives[order]
    cum_pos = np.cumsum(hits)
    ranks = np.arange(1, len(scores) + 1)
    return float((cum_pos[hits] / ranks[hits]).sum() / n_pos)


@dataclass
class MetricsReport:
    overall_mAP: float
    head_mAP: float
    medium_mAP: float
    tail_mAP: float
    acc_at_1: float
    acc_at_5: float
    per_class_AP: dict          # class index -> AP, evaluated classes only
    skipped_classes: list       # classes with no test positives
    config_digest: str = ""
    seed: int = 0

    def metric_rows(self):
        return [("overall_mAP", self.overall_mAP), ("head_mAP", self.head_mAP),
                ("medium_mAP", self.medium_mAP), ("tail_mAP", self.tail_mAP),
                ("acc_at_1", self.acc_at_1), ("acc_at_5", self.acc_at_5)]

    def to_dict(self):
        return {"overall_mAP": self.overall_mAP, "head_mAP": self.head_mAP,
                "medium_mAP": self.medium_mAP, "tail_mAP": self.tail_mAP,
                "acc_at_1": self.acc_at_1, "acc_at_5": self.acc_at_5,
                "per_class_AP": {str(k): v for k, v in self.per_class_AP.items()},
                "skipped_classes": self.skipped_classes,
                "config_digest": self.config_digest, "seed": self.seed}


def score_records(model, records, experts=None, chunk=256):
    """Eval-mode averaged-expert scores; records are pre-sorted by id."""
    recs = sorted(records, key=lambda r: r.id)
    feats = np.stack([r.features for r in recs])
    labels = np.stack([r.labels for r in recs])
    parts = []
    for start in range(0, len(recs), chunk):
        p = forward_inference(feats[start:start + chunk], model, experts)
        parts.append(p.data)
    return np.concatenate(parts), labels


def _group_mean(per_class, groups, tag):
    vals = [ap for c, ap in per_class.items() if groups[c] == tag]
    return float(np.mean(vals)) if vals else math.nan


def metrics_from_scores(scores, labels, groups, config_digest="", seed=0):
    n, C = scores.shape
    per_class = {}
    skipped = []
    for c in range(C):
        if labels[:, c].sum() == 0:
            skipped.append(c)
        else:
            per_class[c] = average_precision(scores[:, c], labels[:, c])

    # rank classes per sample: score descending, ties by class index ascending
    order = np.argsort(-scores, axis=1, kind="stable")
    top1 = order[:, 0]
    top5 = order[:, :min(5, C)]
    acc1 = float(np.mean(labels[np.arange(n), top1] > 0))
    acc5 = float(np.mean([labels[i, top5[i]].any() for i in range(n)]))

    return MetricsReport(
        overall_mAP=float(np.mean(list(per_class.values()))),
        head_mAP=_group_mean(per_class, groups, HEAD),
        medium_mAP=_group_mean(per_class, groups, MEDIUM),
        tail_mAP=_group_mean(per_class, groups, TAIL),
        acc_at_1=acc1, acc_at_5=acc5,
        per_class_AP=per_class, skipped_classes=skipped,
        config_digest=config_digest, seed=seed)


def evaluate(model, records, stats, experts=None, config_digest="", seed=0):
    """MetricsReport for a test set under averaged-expert inference."""
    if not records:
        raise ValueError("test set is empty")
    scores, labels = score_records(model, records, experts)
    return metrics_from_scores(scores, labels, stats.groups, config_digest, seed)


# -- report serialization ------------------------------------------------------

def write_report_json(report, path):
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def write_metrics_csv(report, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for name, value in report.metric_rows():
            w.writerow([name, repr(value)])


def write_per_class_csv(report, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["class", "AP"])
        for c in sorted(report.per_class_AP):
            w.writerow([c, repr(report.per_class_AP[c])])


# -- ablation and sweep harnesses ----------------------------------------------

STANDARD_VARIANTS = (
    ("E1", (LONG_TAILED,), True),
    ("E2", (UNIFORM,), True),
    ("E3", (INVERSE,), True),
    ("E1+E2", (LONG_TAILED, UNIFORM), True),
    ("E1+E3", (LONG_TAILED, INVERSE), True),
    ("E2+E3", (UNIFORM, INVERSE), True),
    ("MEDC", EXPERT_KINDS, True),
    ("No-Temporal-Attention", EXPERT_KINDS, False),
)

METRIC_COLUMNS = ("overall_mAP", "head_mAP", "medium_mAP", "tail_mAP",
                  "acc_at_1", "acc_at_5")


def run_variant(cfg, train_records, test_records, stats, experts,
                temporal_attention, seed):
    variant_cfg = replace(cfg, active_experts=tuple(experts),
                          temporal_attention=temporal_attention, seed=seed)
    model, _ = train(variant_cfg, train_records)
    return evaluate(model, test_records, stats, seed=seed)


def ablate(cfg, train_records, test_records, stats, variants=STANDARD_VARIANTS,
           seeds=(0,)):
    """Train and evaluate each (name, experts, attention) variant per seed.

    Returns one row per variant with each metric averaged over seeds.
    """
    if not variants:
        raise ValueError("variant grid is empty")
    rows = []
    for name, experts, attention in variants:
        reports = [run_variant(cfg, train_records, test_records, stats,
                               experts, attention, seed) for seed in seeds]
        row = {"variant": name}
        for col in METRIC_COLUMNS:
            row[col] = float(np.mean([getattr(r, col) for r in reports]))
        rows.append(row)
    return rows


def write_ablation_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant"] + list(METRIC_COLUMNS))
        for row in rows:
            w.writerow([row["variant"]] + [repr(row[c]) for c in METRIC_COLUMNS])


def lambda_sweep(cfg, train_records, test_records, stats, lambda1_grid,
                 lambda3_grid):
    """Overall mAP per (lambda1, lambda3) grid point with lambda2 fixed at 1."""
    if not lambda1_grid or not lambda3_grid:
        raise ValueError("lambda grids must be non-empty")
    rows = []
    for l1 in lambda1_grid:
        for l3 in lambda3_grid:
            weights = replace(cfg.weights, lambda1=l1, lambda2=1.0, lambda3=l3)
            point_cfg = replace(cfg, weights=weights)
            model, _ = train(point_cfg, train_records)
            report = evaluate(model, test_records, stats)
            rows.append({"lambda1": l1, "lambda3": l3,
                         "overall_mAP": report.overall_mAP})
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["lambda1", "lambda3", "overall_mAP"])
        for row in rows:
            w.writerow([repr(float(row["lambda1"])), repr(float(row["lambda3"])),
                        repr(row["overall_mAP"])])
