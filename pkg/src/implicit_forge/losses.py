"""Training losses.

loss_multiview is a plain mean of squared differences over every element
(pixels x 4 channels x views); loss_occupancy is mean binary cross-entropy
with probabilities clamped away from 0/1.
"""

from typing import List, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ContractViolation, Tensor
from .splat import RenderedView


def _as_image_tensor(view) -> Tensor:
    if isinstance(view, RenderedView):
        return view.image
    if isinstance(view, Tensor):
        return view
    return Tensor(np.asarray(view, dtype=np.float64))


def loss_multiview(rendered: Sequence, targets: Sequence) -> Tensor:
    """Mean squared difference across all views, pixels, and channels."""
    if len(rendered) == 0 or len(rendered) != len(targets):
        raise ContractViolation(
            "need equally many rendered and target views, got %d vs %d"
            % (len(rendered), len(targets))
        )
    total = None
    count = 0
    for r, t in zip(rendered, targets):
        rt = _as_image_tensor(r)
        tt = _as_image_tensor(t)
        if rt.data.shape != tt.data.shape:
            raise ContractViolation(
                "view extents differ: %r vs %r" % (rt.data.shape, tt.data.shape)
            )
        term = ad.reduce_sum(ad.square(rt - tt))
        total = term if total is None else total + term
        count += rt.data.size
    return total * (1.0 / count)


def loss_occupancy(predicted: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy; log arguments clamped at 1e-7."""
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    p = predicted if isinstance(predicted, Tensor) else Tensor(np.asarray(predicted, dtype=np.float64))
    if p.data.size != y.size:
        raise ContractViolation(
            "prediction/label counts differ: %d vs %d" % (p.data.size, y.size)
        )
    p = ad.reshape(p, (y.size,))
    yt = Tensor(y)
    # ad.log clamps its argument at 1e-7 internally
    ll = yt * ad.log(p) + (Tensor(1.0 - y)) * ad.log(Tensor(np.ones_like(y)) - p)
    return -ad.reduce_mean(ll)


def loss_masked_image(rendered: Tensor, target: np.ndarray) -> Tensor:
    """Stage-2 self-supervision against a single masked RGBA view.

    MSE(rendered alpha, mask) + MSE(rendered RGB * mask, target RGB * mask),
    each term a plain mean over its own elements.
    """
    target = np.asarray(target, dtype=np.float64)
    if rendered.data.shape != target.shape:
        raise ContractViolation(
            "rendered/target extents differ: %r vs %r" % (rendered.data.shape, target.shape)
        )
    mask = target[:, :, 3]
    alpha = ad.slice_last(rendered, 3, 4)
    rgb = ad.slice_last(rendered, 0, 3)
    a_term = ad.reduce_mean(ad.square(alpha - Tensor(mask[:, :, None])))
    m3 = Tensor(np.repeat(mask[:, :, None], 3, axis=2))
    rgb_term = ad.reduce_mean(ad.square(rgb * m3 - Tensor(target[:, :, :3] * mask[:, :, None])))
    return a_term + rgb_term
