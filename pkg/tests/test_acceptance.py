"""Acceptance gate.

Fast criteria (gradients, shapes, oracles, isolation, protocol, determinism)
run in seconds. The two trend criteria train the full cross-validation
protocol at a reduced 50-epoch geometry on the synthetic reference dataset
and take tens of minutes of CPU; they share their heavy runs through
session-scoped fixtures.
"""

import hashlib
import time

import numpy as np
import pytest

from eegfactor import losses
from eegfactor.autodiff import Tensor
from eegfactor.data import SynthConfig, split_folds, synthesize_sparse_dataset
from eegfactor.experiments import run_ablation
from eegfactor.gradcheck import op_gradcheck_suite
from eegfactor.nets import NetConfig, build_model, forward_classifier, forward_discriminator, forward_fc, forward_fs
from eegfactor.optim import AdamW
from eegfactor.trainer import TrainConfig, train_cv, train_epoch, train_fold, _expand_crops, _mode_groups
from conftest import small_net_config


# ---------------------------------------------------------------------------
# frozen calibration for the trend criteria (chosen once via pilot runs)

REFERENCE_DATA = dict(seed=1, common_amplitude=4.0, specific_amplitude=0.40, noise_std=0.5)
ACCEPT_NET = dict(
    n_feature_maps=8, temporal_kernel=24, n_timesamples=384, hidden_sizes=(192, 96, 48)
)
ACCEPT_TRAIN = dict(
    epochs=50, checkpoint_after_epoch=25, crop_window_samples=384,
    crop_stride_samples=997, batch_size=16, d_steps_per_batch=5,
)
TREND_SEEDS = (0, 1, 2)
CHANCE = 1.0 / 6.0


def _hash(params):
    h = hashlib.sha256()
    for k in sorted(params):
        h.update(params[k].data.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# 1. gradient verification


def test_criterion_1_gradcheck_all_ops():
    t0 = time.time()
    results = op_gradcheck_suite(seed=0, tol=1e-4, n_trials=5)
    elapsed = time.time() - t0
    worst = max(results.values())
    print(f"\n[criterion 1] max relative error {worst:.3e} over {len(results)} ops "
          f"in {elapsed:.1f}s")
    for name, err in sorted(results.items()):
        assert err <= 1e-4, f"{name}: {err:.3e}"
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# 2. shape conformance at the reference geometry


def test_criterion_2_reference_shapes():
    cfg = NetConfig()  # 24 channels, 997 samples, 40 maps
    model = build_model(cfg, seed=0)
    x = Tensor(np.random.default_rng(0).standard_normal((2, 1, 24, 997)))
    zc, zs = forward_fc(model, x), forward_fs(model, x)
    assert zc.data.shape == (2, 40, 64)
    assert zs.data.shape == (2, 40, 64)
    assert cfg.classifier_in == 5120
    assert model.params["cls.0.w"].data.shape[0] == 5120
    # derived discriminator width: one feature matrix, i.e. half the classifier
    assert cfg.discriminator_in == 2560
    assert model.params["dsc.0.w"].data.shape[0] == 2560
    assert forward_classifier(model, zc, zs).data.shape == (2, 6)
    assert forward_discriminator(model, zc).data.shape == (2, 2)
    print("\n[criterion 2] z 40x64, classifier in 5120, discriminator in 2560")


# ---------------------------------------------------------------------------
# 3. loss and optimizer oracles


def test_criterion_3_oracles():
    t = lambda v: Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)

    uniform = float(losses.cls_loss(t(np.zeros((3, 6))), np.array([0, 1, 2])).data)
    assert abs(uniform - np.log(6.0)) < 1e-9

    z2 = t(np.zeros((4, 2)))
    assert abs(float(losses.adv_loss_d(z2, t(np.zeros((4, 2)))).data) - np.log(2.0)) < 1e-9
    assert abs(float(losses.adv_loss_fc(z2).data) - np.log(2.0)) < 1e-9

    eye = np.eye(2)[None]
    swap = np.array([[[0.0, 1.0], [1.0, 0.0]]])
    disj_c = t(np.array([[[1.0, 0.0], [0.0, 0.0]]]))
    disj_s = t(np.array([[[0.0, 0.0], [0.0, 1.0]]]))
    assert float(losses.diff_loss(disj_c, disj_s).data) == 0.0
    assert abs(float(losses.diff_loss(t(eye), t(eye)).data) - 2.0) < 1e-12
    assert abs(float(losses.diff_loss(t(eye), t(swap)).data) - 2.0) < 1e-12

    p = Tensor(np.array([1.0]), requires_grad=True)
    p.grad = np.array([1.0])
    AdamW({"p": p}, lr=0.001, weight_decay=0.01).step()
    expected = 1.0 - 0.001 / (1.0 + 1e-8) - 0.001 * 0.01 * 1.0  # = 0.99899000...
    assert abs(p.data[0] - expected) < 1e-12
    print(f"\n[criterion 3] oracles hold; AdamW single step -> {p.data[0]:.12f}")


# ---------------------------------------------------------------------------
# heavy shared fixtures for the trend criteria (4 and 5)


@pytest.fixture(scope="session")
def reference_dataset():
    return synthesize_sparse_dataset(SynthConfig(**REFERENCE_DATA))


@pytest.fixture(scope="session")
def ablation_reports(reference_dataset, tmp_path_factory):
    """3 seeds x 3 arms x 5 folds at the frozen reduced geometry."""
    root = tmp_path_factory.mktemp("ablation")
    net = NetConfig(**ACCEPT_NET)
    out = {}
    t0 = time.time()
    for seed in TREND_SEEDS:
        cfg = TrainConfig(seed=seed, **ACCEPT_TRAIN)
        out[seed] = run_ablation(reference_dataset, net, cfg, root / f"seed{seed}")
    out["elapsed"] = time.time() - t0
    return out


@pytest.fixture(scope="session")
def lambda_zero_reports(reference_dataset, tmp_path_factory):
    """The lambda=0 leg of the sweep; the lambda=1 leg reuses the ablation
    'both' runs, which use identical configs apart from the output path."""
    root = tmp_path_factory.mktemp("sweep")
    net = NetConfig(**ACCEPT_NET)
    out = {}
    for seed in TREND_SEEDS:
        cfg = TrainConfig(seed=seed, lam=0.0, **ACCEPT_TRAIN)
        out[seed] = train_cv(reference_dataset, net, cfg, root / f"seed{seed}", mode="both")
    return out


# ---------------------------------------------------------------------------
# 4. ablation trend


def test_criterion_4_ablation_trend(ablation_reports):
    means = {}
    for mode in ("both", "no_fs", "no_fc"):
        means[mode] = float(np.mean([ablation_reports[s][mode].mean for s in TREND_SEEDS]))
    elapsed = ablation_reports["elapsed"]
    print(f"\n[criterion 4] both={means['both']:.3f} no_fs={means['no_fs']:.3f} "
          f"no_fc={means['no_fc']:.3f} chance={CHANCE:.3f} ({elapsed/60:.1f} min)")
    assert elapsed < 1800.0, f"runtime budget exceeded: {elapsed:.0f}s"
    assert means["both"] >= 0.50
    assert means["both"] >= means["no_fs"] + 0.05
    assert means["both"] >= means["no_fc"] + 0.10
    assert abs(means["no_fc"] - CHANCE) <= 0.10


# ---------------------------------------------------------------------------
# 5. lambda-sweep trend


def test_criterion_5_lambda_sweep(ablation_reports, lambda_zero_reports):
    acc0 = float(np.mean([lambda_zero_reports[s].mean for s in TREND_SEEDS]))
    acc1 = float(np.mean([ablation_reports[s]["both"].mean for s in TREND_SEEDS]))
    ortho0 = float(np.mean([
        r["ortho_index"] for s in TREND_SEEDS for r in lambda_zero_reports[s].folds
    ]))
    ortho1 = float(np.mean([
        r["ortho_index"] for s in TREND_SEEDS for r in ablation_reports[s]["both"].folds
    ]))
    print(f"\n[criterion 5] acc(l=0)={acc0:.3f} acc(l=1)={acc1:.3f} "
          f"ortho(l=0)={ortho0:.4f} ortho(l=1)={ortho1:.4f}")
    assert acc1 >= acc0
    assert ortho1 <= 0.8 * ortho0, f"ortho reduction {1 - ortho1/ortho0:.1%} < 20%"


# ---------------------------------------------------------------------------
# 6. training-scheme isolation across an entire epoch


def test_criterion_6_step_isolation(tiny_ds):
    net = small_net_config()
    cfg = TrainConfig(epochs=2, checkpoint_after_epoch=1, batch_size=8, sample_rate_hz=64.0)
    folds = split_folds(tiny_ds, 5, seed=0)
    crops = _expand_crops(tiny_ds, folds[0].train_ids, cfg)

    # step B silenced (lr 0): a full epoch of D updates must leave f_c/f_s/C intact
    model = build_model(net, seed=0)
    opt_g = AdamW(_mode_groups(model, "both"), lr=0.0, weight_decay=0.0)
    opt_d = AdamW(model.dsc_params(), lr=cfg.lr)
    g_before, d_before = _hash(_mode_groups(model, "both")), _hash(model.dsc_params())
    train_epoch(model, tiny_ds, crops, cfg, opt_g, opt_d, np.random.default_rng(0))
    assert _hash(_mode_groups(model, "both")) == g_before
    assert _hash(model.dsc_params()) != d_before

    # step A silenced: a full epoch of encoder/classifier updates must leave D intact
    model = build_model(net, seed=0)
    opt_g = AdamW(_mode_groups(model, "both"), lr=cfg.lr)
    opt_d = AdamW(model.dsc_params(), lr=0.0, weight_decay=0.0)
    g_before, d_before = _hash(_mode_groups(model, "both")), _hash(model.dsc_params())
    train_epoch(model, tiny_ds, crops, cfg, opt_g, opt_d, np.random.default_rng(0))
    assert _hash(_mode_groups(model, "both")) != g_before
    assert _hash(model.dsc_params()) == d_before
    print("\n[criterion 6] step A touches only D; step B touches only f_c/f_s/C")


# ---------------------------------------------------------------------------
# 7. protocol fidelity


def test_criterion_7_protocol(reference_dataset, tiny_ds, tmp_path):
    # 5-fold geometry on the 300-trial reference dataset
    folds = split_folds(reference_dataset, k=5, seed=0)
    by_label = {t.trial_id: t.label for t in reference_dataset.trials}
    all_test = []
    for f in folds:
        for ids, per_class in ((f.train_ids, 30), (f.val_ids, 10), (f.test_ids, 10)):
            labels = [by_label[i] for i in ids]
            assert all(labels.count(k) == per_class for k in range(6))
        all_test.extend(f.test_ids)
    assert sorted(all_test) == sorted(t.trial_id for t in reference_dataset.trials)

    # checkpoint selection: min validation loss among epochs > checkpoint_after_epoch
    import json
    net = small_net_config()
    cfg = TrainConfig(epochs=5, checkpoint_after_epoch=2, batch_size=8, sample_rate_hz=64.0)
    tiny_folds = split_folds(tiny_ds, 5, seed=0)
    best, _, _ = train_fold(tiny_ds, tiny_folds[0], net, cfg, fold_seed=0, out_dir=tmp_path)
    rows = [json.loads(l) for l in (tmp_path / "run_log.jsonl").read_text().splitlines()]
    eligible = [r for r in rows if r["epoch"] > cfg.checkpoint_after_epoch]
    assert best.epoch > cfg.checkpoint_after_epoch
    assert all(best.val_loss <= r["val_loss"] for r in eligible)

    # crop-averaged prediction is invariant to crop order
    from eegfactor.trainer import predict_trials

    net32 = small_net_config(n_timesamples=32)
    model = build_model(net32, seed=1)
    pcfg = TrainConfig(epochs=2, checkpoint_after_epoch=1,
                       crop_window_samples=32, crop_stride_samples=8, sample_rate_hz=64.0)
    trials = tiny_ds.trials[:5]
    assert predict_trials(model, trials, pcfg) == predict_trials(model, trials[::-1], pcfg)[::-1]
    print("\n[criterion 7] 30/10/10 folds, min-val checkpoint, crop-order invariance")


# ---------------------------------------------------------------------------
# 8. determinism


def test_criterion_8_bitwise_determinism(tiny_ds, tmp_path):
    net = small_net_config()
    cfg = TrainConfig(epochs=3, checkpoint_after_epoch=1, batch_size=8,
                      sample_rate_hz=64.0, seed=11)
    rep_a = train_cv(tiny_ds, net, cfg, tmp_path / "a")
    rep_b = train_cv(tiny_ds, net, cfg, tmp_path / "b")

    def strip_paths(rep):
        d = rep.to_dict()
        for row in d["folds"]:
            row.pop("checkpoint", None)
        return d

    assert strip_paths(rep_a) == strip_paths(rep_b)
    for fold in range(5):
        for name in ("run_log.jsonl", "checkpoint.ckpt"):
            fa = (tmp_path / "a" / f"fold{fold}" / name).read_bytes()
            fb = (tmp_path / "b" / f"fold{fold}" / name).read_bytes()
            assert fa == fb, f"fold{fold}/{name} differs"
    ra = (tmp_path / "a" / "report.json").read_text().replace(str(tmp_path / "a"), "")
    rb = (tmp_path / "b" / "report.json").read_text().replace(str(tmp_path / "b"), "")
    assert ra == rb
    print("\n[criterion 8] two runs byte-identical (logs, checkpoints, reports)")
