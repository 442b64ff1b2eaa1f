"""The four networks: class-common encoder, class-specific encoder, classifier,
discriminator. Every layer width is derived from :class:`NetConfig` at build
time; nothing is hard-coded to the reference geometry.
"""

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_MAGIC = b"FBCICKPT"
CHECKPOINT_VERSION = 1


@dataclass
class NetConfig:
    n_eeg_channels: int = 24
    n_timesamples: int = 997
    n_classes: int = 6
    n_feature_maps: int = 40
    temporal_kernel: int = 48
    spatial_kernel: int = 24
    pool_kernel: int = 68
    pool_stride: int = 14
    dropout_p: float = 0.5
    hidden_sizes: tuple = (2560, 1280, 640)

    def __post_init__(self):
        self.hidden_sizes = tuple(self.hidden_sizes)
        self.validate()

    def validate(self):
        if self.spatial_kernel > self.n_eeg_channels:
            raise ValueError("spatial_kernel exceeds n_eeg_channels")
        if self.spatial_kernel != self.n_eeg_channels:
            # feature maps are [B, F, T]; the spatial conv must collapse the
            # electrode axis to a single row
            raise ValueError(
                "spatial_kernel must equal n_eeg_channels so the electrode axis collapses"
            )
        if self.temporal_kernel > self.n_timesamples:
            raise ValueError("temporal_kernel exceeds n_timesamples")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")
        if len(self.hidden_sizes) != 3:
            raise ValueError("expected exactly 3 hidden layer widths")
        if self.t_out < 1:
            raise ValueError("derived feature-time length is < 1; shrink pool/kernels")

    @property
    def conv_time_out(self):
        return self.n_timesamples - self.temporal_kernel + 1

    @property
    def t_out(self):
        return (self.conv_time_out - self.pool_kernel) // self.pool_stride + 1

    @property
    def classifier_in(self):
        return self.n_feature_maps * 2 * self.t_out

    @property
    def discriminator_in(self):
        return self.n_feature_maps * self.t_out


@dataclass
class FactorModel:
    config: NetConfig
    params: dict = field(default_factory=dict)

    def group(self, prefix):
        return {k: v for k, v in self.params.items() if k.startswith(prefix)}

    def fc_params(self):
        return self.group("fc.")

    def fs_params(self):
        return self.group("fs.")

    def cls_params(self):
        return self.group("cls.")

    def dsc_params(self):
        return self.group("dsc.")

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_bytes(self):
        """Concatenated parameter payload, for cheap equality hashing in tests."""
        return b"".join(self.params[k].data.tobytes() for k in sorted(self.params))


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def build_model(config: NetConfig, seed: int) -> FactorModel:
    """Initialize all four networks; deterministic for a given seed."""
    config.validate()
    rng = np.random.default_rng(seed)
    f = config.n_feature_maps
    tk, sk = config.temporal_kernel, config.spatial_kernel
    params = {}

    for enc in ("fc", "fs"):
        params[f"{enc}.temporal.w"] = _uniform(rng, tk, (f, 1, 1, tk))
        params[f"{enc}.temporal.b"] = _zeros(f)
        params[f"{enc}.spatial.w"] = _uniform(rng, f * sk, (f, f, sk, 1))
        params[f"{enc}.spatial.b"] = _zeros(f)

    def mlp(name, in_width, out_width):
        widths = [in_width, *config.hidden_sizes, out_width]
        for i in range(4):
            params[f"{name}.{i}.w"] = _uniform(rng, widths[i], (widths[i], widths[i + 1]))
            params[f"{name}.{i}.b"] = _zeros(widths[i + 1])

    mlp("cls", config.classifier_in, config.n_classes)
    mlp("dsc", config.discriminator_in, 2)
    return FactorModel(config=config, params=params)


def _forward_encoder(model, prefix, x, training, rng):
    cfg = model.config
    p = model.params
    if x.data.ndim != 4 or x.data.shape[1] != 1:
        raise ValueError(f"encoder input must be [B,1,channels,T], got {x.data.shape}")
    if x.data.shape[2] != cfg.n_eeg_channels:
        raise ValueError(
            f"encoder input has {x.data.shape[2]} channels, config says {cfg.n_eeg_channels}"
        )
    h = ad.conv2d(x, p[f"{prefix}.temporal.w"], p[f"{prefix}.temporal.b"], stride=(1, 1))
    h = ad.conv2d(h, p[f"{prefix}.spatial.w"], p[f"{prefix}.spatial.b"], stride=(1, 1))
    h = ad.avg_pool2d(h, (1, cfg.pool_kernel), (1, cfg.pool_stride))
    h = ad.elu(h)
    h = ad.dropout(h, cfg.dropout_p, training, rng)
    return ad.reshape(h, (x.data.shape[0], cfg.n_feature_maps, cfg.t_out))


def forward_fc(model, x, training=False, rng=None):
    """Class-common encoder: [B,1,channels,T] -> [B,F,T_out]."""
    return _forward_encoder(model, "fc", x, training, rng)


def forward_fs(model, x, training=False, rng=None):
    """Class-specific encoder: same architecture, disjoint parameters."""
    return _forward_encoder(model, "fs", x, training, rng)


def _forward_mlp(model, name, h, training, rng):
    cfg = model.config
    p = model.params
    for i in range(4):
        h = ad.linear(h, p[f"{name}.{i}.w"], p[f"{name}.{i}.b"])
        if i < 3:
            h = ad.elu(h)
            h = ad.dropout(h, cfg.dropout_p, training, rng)
    return h


def classifier_hidden_width(config):
    return config.hidden_sizes[-1]


def forward_classifier(model, z_c, z_s, training=False, rng=None, return_hidden=False):
    """Concatenate the two feature maps along time, flatten, run the MLP; raw logits."""
    if z_c.data.shape != z_s.data.shape:
        raise ValueError(f"feature shapes differ: {z_c.data.shape} vs {z_s.data.shape}")
    h = ad.flatten(ad.concat_time(z_c, z_s))
    cfg = model.config
    p = model.params
    hidden = None
    for i in range(4):
        h = ad.linear(h, p[f"cls.{i}.w"], p[f"cls.{i}.b"])
        if i < 3:
            h = ad.elu(h)
            if i == 2:
                hidden = h
            h = ad.dropout(h, cfg.dropout_p, training, rng)
    if return_hidden:
        return h, hidden
    return h


def forward_discriminator(model, z, training=False, rng=None):
    """Flatten one feature map and produce two logits (index 1 = real)."""
    return _forward_mlp(model, "dsc", ad.flatten(z), training, rng)


# ---------------------------------------------------------------------------
# checkpoint serialization


def save_checkpoint(model: FactorModel, path):
    cfg_bytes = json.dumps(asdict(model.config), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        for name in sorted(model.params):
            data = model.params[name].data
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.astype("<f8").tobytes())


def load_checkpoint(path) -> FactorModel:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<I", fh.read(4))
        cfg_dict = json.loads(fh.read(cfg_len).decode())
        config = NetConfig(**cfg_dict)
        params = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = fh.read(name_len).decode()
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            n = int(np.prod(shape)) if rank else 1
            payload = fh.read(8 * n)
            if len(payload) != 8 * n:
                raise ValueError(f"truncated checkpoint while reading {name}")
            params[name] = Tensor(
                np.frombuffer(payload, dtype="<f8").reshape(shape).copy(),
                requires_grad=True,
            )
    return FactorModel(config=config, params=params)
