"""Training objective of the frame-wise multi-label classifier."""

import numpy

from dcrnn_sed.common.exceptions import InputValidationError
from dcrnn_sed.nn.tensor import Tensor, as_tensor

PROBABILITY_CLAMP = 1e-7


def bce_loss(pred, target, mask=None) -> Tensor:
    """Mean binary cross-entropy over the unmasked frame-class cells.

    :param pred: probabilities of shape ``(batch, time, classes)``, clamped to ``[1e-7, 1 - 1e-7]``.
    :param target: binary activity of the same shape as ``pred``.
    :param mask: optional boolean array of shape ``(batch, time)`` or ``(batch, time, classes)`` marking the
        cells that count; padded frames are excluded this way.
    :return: scalar tensor.
    """
    pred = as_tensor(pred)
    target = numpy.asarray(target, dtype=pred.data.dtype)
    if target.shape != pred.shape:
        raise InputValidationError(f"target shape {target.shape} does not match prediction shape {pred.shape}")

    if mask is None:
        weights = numpy.ones(pred.shape)
    else:
        mask = numpy.asarray(mask, dtype=bool)
        if mask.shape == pred.shape[:-1]:
            mask = numpy.broadcast_to(mask[..., None], pred.shape)
        if mask.shape != pred.shape:
            raise InputValidationError(f"mask shape {mask.shape} does not match prediction shape {pred.shape}")
        weights = mask.astype(pred.data.dtype)
    count = weights.sum()
    if count == 0:
        raise InputValidationError("the mask leaves no cell to evaluate the loss on")

    clamped = numpy.clip(pred.data, PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    cell_loss = -(target * numpy.log(clamped) + (1.0 - target) * numpy.log(1.0 - clamped))
    loss = (weights * cell_loss).sum() / count

    def backward(grad):
        inside = (pred.data >= PROBABILITY_CLAMP) & (pred.data <= 1.0 - PROBABILITY_CLAMP)
        grad_pred = -(target / clamped - (1.0 - target) / (1.0 - clamped)) * weights * inside / count
        return (grad * grad_pred,)

    return Tensor.from_op(numpy.asarray(loss), (pred,), backward)
