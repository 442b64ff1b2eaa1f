"""Alternating adversarial training, crop augmentation, checkpointing, and the
5-fold cross-validation driver.

Each mini-batch takes two phases: (A) the discriminator learns to separate
task-trial features from resting-state features, with the encoder untracked;
(B) the encoders and classifier minimize classification + flipped-label
adversarial + weighted difference loss, with the discriminator frozen.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import losses, nets
from .autodiff import Tape, Tensor, backward, no_grad, softmax
from .data import sample_resting_batch, split_folds
from .losses import LossRecord
from .nets import build_model, forward_classifier, forward_discriminator, forward_fc, forward_fs
from .optim import AdamW

MODES = ("both", "no_fc", "no_fs")


@dataclass
class TrainConfig:
    epochs: int = 400
    checkpoint_after_epoch: int = 200
    lr: float = 0.001
    weight_decay: float = 0.01
    lam: float = 1.0
    batch_size: int = 16
    crop_window_samples: int = 0  # 0 = full trial length
    crop_stride_samples: int = 0  # 0 = 100 ms at sample_rate_hz
    sample_rate_hz: float = 250.0
    seed: int = 0
    d_steps_per_batch: int = 1
    average_logits: bool = False  # False: average softmax probabilities over crops

    def validate(self):
        if self.checkpoint_after_epoch >= self.epochs:
            raise ValueError("checkpoint_after_epoch must be < epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def window(self, trial_samples):
        return self.crop_window_samples if self.crop_window_samples > 0 else trial_samples

    def stride(self):
        if self.crop_stride_samples > 0:
            return self.crop_stride_samples
        return max(1, int(round(0.1 * self.sample_rate_hz)))


@dataclass
class CheckpointRecord:
    epoch: int
    val_loss: float
    path: str


def make_crops(trial, window, stride):
    """Sliding crops at offsets 0, stride, 2·stride, ... while they fit."""
    length = trial.data.shape[1]
    if window > length:
        raise ValueError(f"crop window {window} exceeds trial length {length}")
    if stride < 1:
        raise ValueError("crop stride must be >= 1")
    return [trial.data[:, off : off + window] for off in range(0, length - window + 1, stride)]


def _crop_batch(crop_list):
    return Tensor(np.stack(crop_list)[:, None, :, :])


def _mode_groups(model, mode):
    """Parameters updated by the encoder/classifier-side optimizer for a mode."""
    if mode == "both":
        return {**model.fc_params(), **model.fs_params(), **model.cls_params()}
    if mode == "no_fc":
        return {**model.fs_params(), **model.cls_params()}
    if mode == "no_fs":
        return {**model.fc_params(), **model.cls_params()}
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def _features_for_classifier(model, x, mode, training, rng):
    """Mode-dependent encoder pass; absent branches are duplicated to keep C's width."""
    if mode == "both":
        z_c = forward_fc(model, x, training, rng)
        z_s = forward_fs(model, x, training, rng)
        return z_c, z_s
    if mode == "no_fc":
        z_s = forward_fs(model, x, training, rng)
        return z_s, z_s
    z_c = forward_fc(model, x, training, rng)
    return z_c, z_c


def _classify(model, x, mode, training=False, rng=None):
    z_a, z_b = _features_for_classifier(model, x, mode, training, rng)
    return forward_classifier(model, z_a, z_b, training, rng)


def train_epoch(model, ds, train_crops, cfg, opt_g, opt_d, rng, mode="both"):
    """One pass over the shuffled training crops; returns the epoch-mean LossRecord."""
    if not train_crops:
        raise ValueError("empty training set")
    adversarial = mode in ("both", "no_fs")
    if adversarial and not ds.resting:
        raise ValueError("adversarial training needs resting trials")
    window = cfg.window(ds.trial_samples)
    stride = cfg.stride()
    order = rng.permutation(len(train_crops))
    sums = np.zeros(5)
    n_batches = 0
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start : start + cfg.batch_size]
        x = _crop_batch([train_crops[i][0] for i in idx])
        y = np.array([train_crops[i][1] for i in idx])
        b = len(idx)

        x_rest = None
        if adversarial:
            rest_trials = sample_resting_batch(ds, b, rng)
            rest_crops = []
            for t in rest_trials:
                crops = make_crops(t, window, stride)
                rest_crops.append(crops[rng.integers(0, len(crops))])
            x_rest = _crop_batch(rest_crops)

        l_d_val = 0.0
        if adversarial:
            with no_grad():
                z_c = forward_fc(model, x, True, rng)
                z_cp = forward_fc(model, x_rest, True, rng)
            for _ in range(cfg.d_steps_per_batch):
                with Tape() as tape:
                    d_real = forward_discriminator(model, z_c, True, rng)
                    d_fake = forward_discriminator(model, z_cp, True, rng)
                    l_d = losses.adv_loss_d(d_real, d_fake)
                opt_d.zero_grad()
                backward(l_d, tape)
                opt_d.step()
                l_d_val = float(l_d.data)

        with Tape() as tape:
            z_a, z_b = _features_for_classifier(model, x, mode, True, rng)
            logits = forward_classifier(model, z_a, z_b, True, rng)
            l_cls = losses.cls_loss(logits, y)
            zero = Tensor(0.0)
            l_fc, l_df = zero, zero
            if adversarial:
                z_cp = forward_fc(model, x_rest, True, rng)
                for p in model.dsc_params().values():
                    p.requires_grad = False
                d_fake = forward_discriminator(model, z_cp, True, rng)
                l_fc = losses.adv_loss_fc(d_fake)
            if mode == "both":
                l_df = losses.diff_loss(z_a, z_b)
            l_all = losses.total_loss(l_cls, l_fc, l_df, cfg.lam if mode == "both" else 0.0)
        opt_g.zero_grad()
        backward(l_all, tape)
        if adversarial:
            for p in model.dsc_params().values():
                p.requires_grad = True
        opt_g.step()

        sums += [float(l_cls.data), l_d_val, float(l_fc.data), float(l_df.data), float(l_all.data)]
        n_batches += 1
    mean = sums / n_batches
    return LossRecord(
        l_cls=mean[0], l_adv_d=mean[1], l_adv_fc=mean[2], l_diff=mean[3], l_all=mean[4],
        lam=cfg.lam,
    )


def _batched_probs(model, crops, cfg, mode):
    """Softmax probabilities (or logits) for a list of crops, inference mode."""
    out = []
    for start in range(0, len(crops), cfg.batch_size):
        x = _crop_batch(crops[start : start + cfg.batch_size])
        logits = _classify(model, x, mode, training=False)
        out.append(logits.data if cfg.average_logits else softmax(logits).data)
    return np.concatenate(out, axis=0)


def predict_trials(model, trials, cfg, mode="both"):
    """Crop-averaged prediction per trial (mean of per-crop probabilities, argmax)."""
    window = cfg.window(trials[0].data.shape[1])
    stride = cfg.stride()
    crops, counts = [], []
    for t in trials:
        c = make_crops(t, window, stride)
        crops.extend(c)
        counts.append(len(c))
    probs = _batched_probs(model, crops, cfg, mode)
    preds = []
    pos = 0
    for n in counts:
        avg = probs[pos : pos + n].mean(axis=0)
        preds.append(int(np.argmax(avg)))
        pos += n
    return preds


def predict_trial(model, trial, cfg, mode="both"):
    return predict_trials(model, [trial], cfg, mode)[0]


def validation_loss(model, val_crops, cfg, mode="both"):
    """Mean classification loss over validation crops, dropout off."""
    total, n = 0.0, 0
    for start in range(0, len(val_crops), cfg.batch_size):
        chunk = val_crops[start : start + cfg.batch_size]
        x = _crop_batch([c[0] for c in chunk])
        y = np.array([c[1] for c in chunk])
        logits = _classify(model, x, mode, training=False)
        total += float(losses.cls_loss(logits, y).data) * len(chunk)
        n += len(chunk)
    return total / n


def _expand_crops(ds, ids, cfg):
    window = cfg.window(ds.trial_samples)
    stride = cfg.stride()
    by_id = {t.trial_id: t for t in ds.trials}
    out = []
    for tid in ids:
        t = by_id[tid]
        for c in make_crops(t, window, stride):
            out.append((c, t.label))
    return out


def train_fold(ds, split, net_cfg, cfg, fold_seed, out_dir, mode="both"):
    """Train one fold; returns (CheckpointRecord, accuracy, run-log rows)."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = build_model(net_cfg, seed=fold_seed)
    rng = np.random.default_rng([fold_seed, cfg.seed])
    opt_g = AdamW(_mode_groups(model, mode), lr=cfg.lr, weight_decay=cfg.weight_decay)
    opt_d = AdamW(model.dsc_params(), lr=cfg.lr, weight_decay=cfg.weight_decay)

    train_crops = _expand_crops(ds, split.train_ids, cfg)
    val_crops = _expand_crops(ds, split.val_ids, cfg)

    ckpt_path = out_dir / "checkpoint.ckpt"
    best = None
    log_rows = []
    for epoch in range(1, cfg.epochs + 1):
        rec = train_epoch(model, ds, train_crops, cfg, opt_g, opt_d, rng, mode)
        val = validation_loss(model, val_crops, cfg, mode)
        if not np.isfinite(rec.l_all) or not np.isfinite(val):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        if epoch > cfg.checkpoint_after_epoch and (best is None or val < best.val_loss):
            nets.save_checkpoint(model, ckpt_path)
            best = CheckpointRecord(epoch=epoch, val_loss=val, path=str(ckpt_path))
        row = {"epoch": epoch, **rec.to_dict(), "val_loss": val}
        log_rows.append(row)
    (out_dir / "run_log.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in log_rows)
    )

    by_id = {t.trial_id: t for t in ds.trials}
    test_trials = [by_id[tid] for tid in split.test_ids]
    best_model = nets.load_checkpoint(best.path)
    preds = predict_trials(best_model, test_trials, cfg, mode)
    labels = [t.label for t in test_trials]
    acc = float(np.mean([p == l for p, l in zip(preds, labels)]))
    return best, acc, log_rows


def train_cv(ds, net_cfg, cfg, out_dir, mode="both", n_folds=5):
    """Full k-fold protocol; returns a CVReport (and writes logs/checkpoints/reports)."""
    from .experiments import CVReport, fold_orthogonality_index

    cfg.validate()
    out_dir = Path(out_dir)
    folds = split_folds(ds, k=n_folds, seed=cfg.seed)
    fold_rows = []
    for split in folds:
        fold_seed = cfg.seed + split.fold
        fdir = out_dir / f"fold{split.fold}"
        best, acc, _ = train_fold(ds, split, net_cfg, cfg, fold_seed, fdir, mode)
        best_model = nets.load_checkpoint(best.path)
        ortho = fold_orthogonality_index(best_model, ds, split.test_ids, cfg)
        fold_rows.append(
            {
                "fold": split.fold,
                "accuracy": acc,
                "ortho_index": ortho,
                "checkpoint": best.path,
                "best_epoch": best.epoch,
                "val_loss": best.val_loss,
            }
        )
    report = CVReport.from_folds(ds.name, mode, cfg.lam, fold_rows)
    report.save(out_dir)
    return report
