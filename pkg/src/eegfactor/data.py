"""Dataset types, the synthetic sparse-condition generator, on-disk format,
and fold splitting.

The generator places all class information in temporal fine structure on one
shared channel subset: every class rides the same band-limited oscillation
(with per-trial random phase and amplitude), plus a small deterministic
class-specific phase/frequency perturbation on the same channels. Resting
trials carry only the shared oscillation, which is what makes them useful
adversarial fakes.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RESTING = -1

TRIAL_MAGIC = b"EEGT"


class DatasetFormatError(Exception):
    """Base class for on-disk dataset problems."""


class MagicMismatchError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class MalformedHeaderError(DatasetFormatError):
    pass


@dataclass
class EEGTrial:
    data: np.ndarray  # [channels, samples] f64
    label: int  # class index, or RESTING
    session: int
    trial_id: int


@dataclass
class EEGDataset:
    name: str
    sample_rate_hz: float
    n_channels: int
    classes: list
    trials: list = field(default_factory=list)  # task trials only
    resting: list = field(default_factory=list)

    @property
    def n_classes(self):
        return len(self.classes)

    @property
    def trial_samples(self):
        return self.trials[0].data.shape[1] if self.trials else 0

    def validate(self):
        lengths = {t.data.shape[1] for t in self.trials + self.resting}
        if len(lengths) > 1:
            raise ValueError(f"trials have differing lengths: {sorted(lengths)}")
        for t in self.trials + self.resting:
            if t.data.shape[0] != self.n_channels:
                raise ValueError(
                    f"trial {t.trial_id} has {t.data.shape[0]} channels, expected {self.n_channels}"
                )
        labels = {t.label for t in self.trials}
        if labels and (min(labels) < 0 or max(labels) >= self.n_classes):
            raise ValueError("task trial labels must be dense in [0, n_classes)")
        if any(t.label != RESTING for t in self.resting):
            raise ValueError("resting trials must carry the RESTING label")


@dataclass
class SynthConfig:
    n_classes: int = 6
    trials_per_class: int = 50
    n_resting: int = 50
    n_channels: int = 24
    trial_samples: int = 997
    sample_rate_hz: float = 250.0
    common_amplitude: float = 1.0
    specific_amplitude: float = 0.3
    noise_std: float = 0.5
    seed: int = 0

    def validate(self):
        for name in ("n_classes", "trials_per_class", "n_resting", "n_channels", "trial_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.specific_amplitude < 0:
            raise ValueError("specific_amplitude must be >= 0")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def synthesize_sparse_dataset(cfg: SynthConfig) -> EEGDataset:
    """Deterministic synthetic dataset honoring the sparse-condition setup."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    t = np.arange(cfg.trial_samples) / cfg.sample_rate_hz

    n_subset = max(1, cfg.n_channels // 3)
    subset = np.sort(rng.choice(cfg.n_channels, size=n_subset, replace=False))
    gains = rng.uniform(0.7, 1.3, size=n_subset)
    freqs = np.sort(rng.uniform(8.0, 30.0, size=3))

    # deterministic per-class perturbation, spatially identical to the common part
    d_freq = rng.uniform(-2.0, 2.0, size=(cfg.n_classes, 3))
    d_phase = rng.uniform(0.0, 2.0 * np.pi, size=(cfg.n_classes, 3))
    specific = np.stack(
        [
            sum(
                np.sin(2.0 * np.pi * (freqs[j] + d_freq[k, j]) * t + d_phase[k, j])
                for j in range(3)
            )
            for k in range(cfg.n_classes)
        ]
    )

    def make_trial(label, trial_id):
        phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
        amp = rng.uniform(0.7, 1.3) * cfg.common_amplitude
        common = amp * sum(np.sin(2.0 * np.pi * freqs[j] * t + phases[j]) for j in range(3))
        sig = common
        if label != RESTING:
            sig = sig + cfg.specific_amplitude * specific[label]
        data = cfg.noise_std * rng.standard_normal((cfg.n_channels, cfg.trial_samples))
        data[subset] += gains[:, None] * sig
        # quantize to f32 grid so the f32 on-disk format round-trips bit-exactly
        data = data.astype(np.float32).astype(np.float64)
        return EEGTrial(data=data, label=label, session=1, trial_id=trial_id)

    trials, resting = [], []
    tid = 0
    for k in range(cfg.n_classes):
        for _ in range(cfg.trials_per_class):
            trials.append(make_trial(k, tid))
            tid += 1
    for _ in range(cfg.n_resting):
        resting.append(make_trial(RESTING, tid))
        tid += 1

    ds = EEGDataset(
        name=f"synth-sparse-seed{cfg.seed}",
        sample_rate_hz=cfg.sample_rate_hz,
        n_channels=cfg.n_channels,
        classes=[f"class{k}" for k in range(cfg.n_classes)],
        trials=trials,
        resting=resting,
    )
    ds.validate()
    return ds


# ---------------------------------------------------------------------------
# on-disk format: manifest.json + one binary file per trial


def _write_trial(path, trial):
    c, s = trial.data.shape
    with open(path, "wb") as fh:
        fh.write(TRIAL_MAGIC)
        fh.write(struct.pack("<II", c, s))
        fh.write(trial.data.astype("<f4").tobytes())


def _read_trial(path):
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise MalformedHeaderError(f"{path}: file too short for a trial header")
    if raw[:4] != TRIAL_MAGIC:
        raise MagicMismatchError(f"{path}: bad magic {raw[:4]!r}, expected {TRIAL_MAGIC!r}")
    c, s = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * c * s
    if len(raw) < expected:
        raise TruncatedFileError(
            f"{path}: truncated at byte {len(raw)}, header promises {expected} bytes"
        )
    data = np.frombuffer(raw[12:expected], dtype="<f4").astype(np.float64).reshape(c, s)
    return data


def save_dataset(ds: EEGDataset, path):
    """Write manifest.json plus one EEGT file per trial into directory `path`."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for trial in ds.trials + ds.resting:
        fname = f"trial_{trial.trial_id:04d}.eegt"
        _write_trial(root / fname, trial)
        entries.append(
            {
                "file": fname,
                "class_index": "resting" if trial.label == RESTING else trial.label,
                "session": trial.session,
                "trial_id": trial.trial_id,
            }
        )
    manifest = {
        "name": ds.name,
        "sample_rate_hz": ds.sample_rate_hz,
        "n_channels": ds.n_channels,
        "trial_samples": ds.trial_samples,
        "classes": list(ds.classes),
        "trials": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_dataset(path) -> EEGDataset:
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise DatasetFormatError(f"{root}: no manifest.json")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise MalformedHeaderError(f"{mpath}: invalid JSON: {e}") from e
    for key in ("name", "sample_rate_hz", "n_channels", "classes", "trials"):
        if key not in manifest:
            raise MalformedHeaderError(f"{mpath}: missing key {key!r}")
    ds = EEGDataset(
        name=manifest["name"],
        sample_rate_hz=manifest["sample_rate_hz"],
        n_channels=manifest["n_channels"],
        classes=list(manifest["classes"]),
    )
    for entry in manifest["trials"]:
        data = _read_trial(root / entry["file"])
        if data.shape[0] != ds.n_channels:
            raise MalformedHeaderError(
                f"{entry['file']}: {data.shape[0]} channels, manifest says {ds.n_channels}"
            )
        label = RESTING if entry["class_index"] == "resting" else int(entry["class_index"])
        trial = EEGTrial(
            data=data, label=label, session=int(entry["session"]), trial_id=int(entry["trial_id"])
        )
        (ds.resting if label == RESTING else ds.trials).append(trial)
    ds.validate()
    return ds


# ---------------------------------------------------------------------------
# splitting and sampling


@dataclass
class FoldSplit:
    fold: int
    train_ids: list
    val_ids: list
    test_ids: list


def split_folds(ds: EEGDataset, k=5, seed=0):
    """Per-class seeded shuffle, contiguous block assignment.

    Fold i takes block i as test and block (i+1) mod k as validation; resting
    trials are excluded entirely.
    """
    if k < 2:
        raise ValueError("k-fold splitting needs k >= 2")
    by_class = {}
    for t in ds.trials:
        by_class.setdefault(t.label, []).append(t.trial_id)
    for label, ids in by_class.items():
        if len(ids) % k != 0:
            raise ValueError(f"class {label} has {len(ids)} trials, not divisible by k={k}")
    rng = np.random.default_rng(seed)
    blocks = {}
    for label in sorted(by_class):
        ids = np.array(sorted(by_class[label]))
        rng.shuffle(ids)
        blocks[label] = np.split(ids, k)
    folds = []
    for i in range(k):
        test, val, train = [], [], []
        for label in sorted(blocks):
            for b in range(k):
                ids = blocks[label][b].tolist()
                if b == i:
                    test.extend(ids)
                elif b == (i + 1) % k:
                    val.extend(ids)
                else:
                    train.extend(ids)
        folds.append(FoldSplit(fold=i, train_ids=train, val_ids=val, test_ids=test))
    return folds


def sample_resting_batch(ds: EEGDataset, n, rng):
    """n resting trials sampled with replacement (pool is small by design)."""
    if not ds.resting:
        raise ValueError("dataset has no resting trials")
    idx = rng.integers(0, len(ds.resting), size=n)
    return [ds.resting[i] for i in idx]
