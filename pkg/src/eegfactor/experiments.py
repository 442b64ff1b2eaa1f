"""Metrics, the ablation and λ-sweep runners, feature export, and report rendering."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nets
from .nets import forward_classifier, forward_fc, forward_fs
from .trainer import MODES, _crop_batch, make_crops, train_cv

FEATURE_SOURCES = ("z_c", "z_s", "classifier_hidden")


def accuracy(predictions, labels):
    """Fraction of exact matches."""
    if len(predictions) != len(labels):
        raise ValueError(f"length mismatch: {len(predictions)} vs {len(labels)}")
    if len(predictions) == 0:
        raise ValueError("empty prediction list")
    return float(np.mean([int(p == l) for p, l in zip(predictions, labels)]))


def orthogonality_index(zc, zs):
    """Normalized Frobenius overlap ||Zcᵀ·Zs||_F / (||Zc||_F · ||Zs||_F) in [0, 1]."""
    zc = np.asarray(zc, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    if zc.shape != zs.shape:
        raise ValueError(f"shape mismatch: {zc.shape} vs {zs.shape}")
    nc = np.linalg.norm(zc)
    ns = np.linalg.norm(zs)
    if nc == 0.0 or ns == 0.0:
        raise ValueError("orthogonality_index needs nonzero-norm inputs")
    return float(np.linalg.norm(zc.T @ zs) / (nc * ns))


def _encoder_features(model, trials, cfg):
    """Per-crop flattened (z_c, z_s) rows, inference mode."""
    window = cfg.window(trials[0].data.shape[1])
    stride = cfg.stride()
    crops = [c for t in trials for c in make_crops(t, window, stride)]
    zc_rows, zs_rows = [], []
    for start in range(0, len(crops), cfg.batch_size):
        x = _crop_batch(crops[start : start + cfg.batch_size])
        zc = forward_fc(model, x, training=False)
        zs = forward_fs(model, x, training=False)
        zc_rows.append(zc.data.reshape(zc.data.shape[0], -1))
        zs_rows.append(zs.data.reshape(zs.data.shape[0], -1))
    return np.concatenate(zc_rows), np.concatenate(zs_rows)


def fold_orthogonality_index(model, ds, trial_ids, cfg):
    by_id = {t.trial_id: t for t in ds.trials}
    trials = [by_id[tid] for tid in trial_ids]
    zc, zs = _encoder_features(model, trials, cfg)
    return orthogonality_index(zc, zs)


@dataclass
class CVReport:
    dataset: str
    mode: str
    lam: float
    folds: list = field(default_factory=list)
    mean: float = 0.0
    std: float = 0.0

    @classmethod
    def from_folds(cls, dataset, mode, lam, fold_rows):
        accs = [r["accuracy"] for r in fold_rows]
        return cls(
            dataset=dataset,
            mode=mode,
            lam=lam,
            folds=fold_rows,
            mean=float(np.mean(accs)),
            std=float(np.std(accs)),
        )

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "mode": self.mode,
            "lambda": self.lam,
            "folds": self.folds,
            "mean": self.mean,
            "std": self.std,
        }

    def save(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        with open(out_dir / "report.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fold", "test_accuracy"])
            for r in self.folds:
                writer.writerow([r["fold"], r["accuracy"]])

    @classmethod
    def load(cls, path):
        d = json.loads(Path(path).read_text())
        return cls(
            dataset=d["dataset"], mode=d["mode"], lam=d["lambda"],
            folds=d["folds"], mean=d["mean"], std=d["std"],
        )


def run_ablation(ds, net_cfg, cfg, out_dir, modes=MODES):
    """Train the full method and the two single-module arms; one CVReport each."""
    reports = {}
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown ablation mode {mode!r}")
        reports[mode] = train_cv(ds, net_cfg, cfg, Path(out_dir) / mode, mode=mode)
    return reports


def lambda_sweep(ds, net_cfg, cfg, lambdas, out_dir):
    """One full CV run per λ, shared base seed; reports include orthogonality indices."""
    from dataclasses import replace

    reports = []
    for lam in lambdas:
        if lam < 0:
            raise ValueError(f"negative lambda {lam}")
        cfg_l = replace(cfg, lam=float(lam))
        reports.append(train_cv(ds, net_cfg, cfg_l, Path(out_dir) / f"lambda_{lam:g}"))
    return reports


def export_features(model, ds, sources, path, cfg):
    """CSV dump of per-trial feature vectors (mean over crops), inference mode.

    Header: trial_id,class,source,f0,f1,...  One row per (trial, source).
    """
    for s in sources:
        if s not in FEATURE_SOURCES:
            raise ValueError(f"unknown feature source {s!r}; expected one of {FEATURE_SOURCES}")
    window = cfg.window(ds.trial_samples)
    stride = cfg.stride()
    rows = []
    for trial in ds.trials:
        crops = make_crops(trial, window, stride)
        feats = {s: [] for s in sources}
        for start in range(0, len(crops), cfg.batch_size):
            x = _crop_batch(crops[start : start + cfg.batch_size])
            zc = forward_fc(model, x, training=False)
            zs = forward_fs(model, x, training=False)
            if "z_c" in feats:
                feats["z_c"].append(zc.data.reshape(zc.data.shape[0], -1))
            if "z_s" in feats:
                feats["z_s"].append(zs.data.reshape(zs.data.shape[0], -1))
            if "classifier_hidden" in feats:
                _, hidden = forward_classifier(model, zc, zs, training=False, return_hidden=True)
                feats["classifier_hidden"].append(hidden.data)
        for s in sources:
            vec = np.concatenate(feats[s]).mean(axis=0)
            rows.append((trial.trial_id, trial.label, s, vec))
    width = {s: len(r[3]) for r in rows for s in [r[2]]}
    max_width = max(len(r[3]) for r in rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "class", "source"] + [f"f{i}" for i in range(max_width)])
        for tid, label, source, vec in rows:
            writer.writerow([tid, label, source] + [repr(v) for v in vec])
    return len(rows), width


def render_report(report_dict):
    """Aligned text table for a CVReport JSON dict; pure function of its input."""
    lines = [
        f"dataset: {report_dict['dataset']}   mode: {report_dict['mode']}   "
        f"lambda: {report_dict['lambda']:g}",
        f"{'fold':>4}  {'accuracy':>9}  {'ortho_index':>11}",
    ]
    for r in report_dict["folds"]:
        ortho = r.get("ortho_index")
        ortho_s = f"{ortho:.4f}" if ortho is not None else "-"
        lines.append(f"{r['fold']:>4}  {r['accuracy']:>9.4f}  {ortho_s:>11}")
    lines.append(f"mean accuracy: {report_dict['mean']:.4f}  std: {report_dict['std']:.4f}")
    return "\n".join(lines) + "\n"
