"""Training objectives: classification, adversarial (both sides), orthogonality.

The discriminator emits two logits; index 1 means "real" (task-trial feature),
index 0 means "fake" (resting-state feature). The encoder-side adversarial
term is the non-saturating flipped-label form: fakes scored against "real".
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

REAL, FAKE = 1, 0


@dataclass
class LossRecord:
    l_cls: float
    l_adv_d: float
    l_adv_fc: float
    l_diff: float
    l_all: float
    lam: float

    def to_dict(self):
        return {
            "l_cls": self.l_cls,
            "l_adv_d": self.l_adv_d,
            "l_adv_fc": self.l_adv_fc,
            "l_diff": self.l_diff,
            "l_all": self.l_all,
            "lambda": self.lam,
        }


def cls_loss(logits, labels):
    """Softmax cross-entropy, mean over the batch."""
    return ad.cross_entropy(logits, labels)


def adv_loss_d(d_real_logits, d_fake_logits):
    """Discriminator objective: reals scored against REAL, fakes against FAKE."""
    n_real = d_real_logits.data.shape[0]
    n_fake = d_fake_logits.data.shape[0]
    if n_real == 0 or n_fake == 0:
        raise ValueError("adv_loss_d needs non-empty real and fake batches")
    real_term = ad.cross_entropy(d_real_logits, np.full(n_real, REAL))
    fake_term = ad.cross_entropy(d_fake_logits, np.full(n_fake, FAKE))
    return ad.mul(ad.add(real_term, fake_term), 0.5)


def adv_loss_fc(d_fake_logits):
    """Encoder-side adversarial term: fakes scored against REAL (non-saturating)."""
    n = d_fake_logits.data.shape[0]
    return ad.cross_entropy(d_fake_logits, np.full(n, REAL))


def diff_loss(z_c, z_s):
    """(1/B) Σ_i ||z_cⁱᵀ z_sⁱ||²_F over per-sample F×T feature matrices."""
    if z_c.data.shape != z_s.data.shape:
        raise ValueError(f"diff_loss shape mismatch: {z_c.data.shape} vs {z_s.data.shape}")
    cross = ad.matmul_T(z_c, z_s)
    b = z_c.data.shape[0] if z_c.data.ndim == 3 else 1
    return ad.mul(ad.sum_(ad.mul(cross, cross)), 1.0 / b)


def total_loss(l_cls, l_adv_fc, l_diff, lam):
    """L_all = L_cls + L_adv + λ·L_diff (the encoder/classifier-side objective)."""
    for name, t in (("l_cls", l_cls), ("l_adv_fc", l_adv_fc), ("l_diff", l_diff)):
        if not np.all(np.isfinite(t.data)):
            raise FloatingPointError(f"{name} is not finite")
    return ad.add(ad.add(l_cls, l_adv_fc), ad.mul(l_diff, float(lam)))
