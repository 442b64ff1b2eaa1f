"""Finite-difference verification of the reverse-mode gradients."""

import zlib

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward


def grad_check(f, inputs, tol=1e-4, h=1e-5):
    """Compare analytic gradients of scalar-valued `f` against central differences.

    Returns the max relative error over all elements of all inputs, where the
    relative error is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    `f` must be deterministic; it is evaluated twice and must reproduce its
    output bit-exactly (this rejects training-mode dropout).
    """
    for x in inputs:
        if not np.all(np.isfinite(x.data)):
            raise ValueError("grad_check inputs must be finite")

    def run():
        return f(*inputs)

    probe = run()
    if probe.data.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {probe.data.shape}")
    if probe.data != run().data:
        raise ValueError("grad_check function is non-deterministic (e.g. training-mode dropout)")

    for x in inputs:
        x.requires_grad = True
        x.zero_grad()
    with Tape() as tape:
        loss = run()
    backward(loss, tape)

    max_err = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        flat = x.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(run().data)
            flat[i] = orig - h
            fm = float(run().data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            max_err = max(max_err, err)
    return max_err


def _rand(rng, *shape):
    return Tensor(rng.standard_normal(shape))


def op_gradcheck_suite(seed=0, tol=1e-4, n_trials=5):
    """Run grad_check on every differentiable primitive at seeded random inputs.

    Returns {op_name: max_rel_error}; every entry must be <= tol.
    """
    from . import losses

    results = {}

    def check(name, make_case):
        worst = 0.0
        for t in range(n_trials):
            rng = np.random.default_rng(seed * 1000 + zlib.crc32(name.encode()) % 997 + t)
            f, inputs = make_case(rng)
            worst = max(worst, grad_check(f, inputs, tol=tol))
        results[name] = worst

    check(
        "conv2d",
        lambda rng: (
            lambda x, w, b: ad.sum_(ad.elu(ad.conv2d(x, w, b, stride=(1, 2)))),
            [_rand(rng, 2, 2, 4, 7), _rand(rng, 3, 2, 2, 3), _rand(rng, 3)],
        ),
    )
    check(
        "avg_pool2d",
        lambda rng: (
            lambda x: ad.sum_(ad.mul(ad.avg_pool2d(x, (1, 3), (1, 2)), ad.avg_pool2d(x, (1, 3), (1, 2)))),
            [_rand(rng, 2, 3, 2, 8)],
        ),
    )
    check("elu", lambda rng: (lambda x: ad.sum_(ad.elu(x)), [_rand(rng, 4, 5)]))
    check(
        "linear",
        lambda rng: (
            lambda x, w, b: ad.sum_(ad.elu(ad.linear(x, w, b))),
            [_rand(rng, 3, 4), _rand(rng, 4, 2), _rand(rng, 2)],
        ),
    )
    check(
        "flatten_concat",
        lambda rng: (
            lambda a, b: ad.sum_(ad.mul(ad.flatten(ad.concat_time(a, b)), ad.flatten(ad.concat_time(b, a)))),
            [_rand(rng, 2, 3, 4), _rand(rng, 2, 3, 4)],
        ),
    )
    def make_cls(rng):
        labels = rng.integers(0, 4, size=3)
        return lambda x: ad.cross_entropy(x, labels), [_rand(rng, 3, 4)]

    check("softmax_cls_loss", make_cls)

    def make_softmax(rng):
        w = Tensor(rng.standard_normal((3, 5)))
        return lambda x: ad.sum_(ad.mul(ad.softmax(x), w)), [_rand(rng, 3, 5)]

    check("softmax", make_softmax)
    check(
        "diff_loss",
        lambda rng: (
            lambda a, b: losses.diff_loss(a, b),
            [_rand(rng, 2, 3, 4), _rand(rng, 2, 3, 4)],
        ),
    )
    check(
        "adv_loss_d",
        lambda rng: (
            lambda r, f: losses.adv_loss_d(r, f),
            [_rand(rng, 3, 2), _rand(rng, 3, 2)],
        ),
    )
    check(
        "adv_loss_fc",
        lambda rng: (lambda f: losses.adv_loss_fc(f), [_rand(rng, 4, 2)]),
    )
    return results
