"""Task losses and the four cross-lingual alignment losses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .model import ModelParams, crossaligner_predict
from .tensor import Tensor

AUX_NAMES = ("crossaligner", "xeroalign", "contrastive", "translate_intent")


@dataclass
class LossBundle:
    l_ic: Tensor
    l_ec: Tensor
    aux: dict[str, Tensor] = field(default_factory=dict)
    # CrossAligner keeps both language terms; aux["crossaligner"] is their sum
    l_eng: Tensor | None = None
    l_tar: Tensor | None = None

    def values(self) -> dict[str, float]:
        out = {"l_ic": self.l_ic.item(), "l_ec": self.l_ec.item()}
        if self.l_eng is not None:
            out["l_eng"] = self.l_eng.item()
            out["l_tar"] = self.l_tar.item()
        out.update({k: v.item() for k, v in self.aux.items()})
        return out


def task_loss(ic_logits: Tensor, ec_logits: Tensor, y_ic, y_ec, ignore_index: int):
    """Intent cross-entropy and token-level entity cross-entropy (ignored positions skipped)."""
    y_ec = np.asarray(y_ec)
    if ec_logits.ndim != 3 or ec_logits.shape[:2] != y_ec.shape:
        raise T.ShapeError("task_loss", y_ec.shape + ("E",), ec_logits.shape)
    b, s, e = ec_logits.shape
    l_ic = T.loss_cross_entropy(ic_logits, y_ic)
    l_ec = T.loss_cross_entropy(T.reshape(ec_logits, (b * s, e)), y_ec.reshape(-1),
                                ignore_index=ignore_index)
    return l_ic, l_ec


def crossaligner_loss(ec_logits_eng: Tensor, ec_logits_tar: Tensor, y_ca, params: ModelParams):
    """Entity-presence BCE for the English batch and its translation, same labels for both."""
    l_eng = T.loss_binary_cross_entropy(crossaligner_predict(params, ec_logits_eng), y_ca)
    l_tar = T.loss_binary_cross_entropy(crossaligner_predict(params, ec_logits_tar), y_ca)
    return l_eng, l_tar


def contrastive_loss(cls_eng: Tensor, cls_tar: Tensor, temperature: float = 1.0) -> Tensor:
    """InfoNCE over cosine similarities with English anchors and in-batch negatives.

    Row i of the similarity matrix is scored against label i. The default
    temperature of 1.0 feeds raw similarities to the cross-entropy.
    """
    if cls_eng.shape != cls_tar.shape or cls_eng.ndim != 2:
        raise T.ShapeError("contrastive_loss", cls_eng.shape, cls_tar.shape)
    n = cls_eng.shape[0]
    if n < 2:
        raise ValueError("contrastive_loss needs at least 2 pairs (no negatives otherwise)")
    sim = T.cosine_similarity_matrix(cls_eng, cls_tar)
    if temperature != 1.0:
        sim = T.scale(sim, 1.0 / temperature)
    return T.loss_cross_entropy(sim, np.arange(n))


def translate_intent_loss(ic_logits_tar: Tensor, y_ic) -> Tensor:
    """Intent cross-entropy on the translated batch using the copied English labels."""
    return T.loss_cross_entropy(ic_logits_tar, y_ic)


def xeroalign_loss(cls_eng: Tensor, cls_tar: Tensor) -> Tensor:
    return T.loss_mse(cls_eng, cls_tar)
