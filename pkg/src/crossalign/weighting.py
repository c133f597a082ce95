"""Equal (1+1) and coefficient-of-variation weighting of auxiliary losses.

CoV weight for auxiliary ``a`` at step ``t``::

    ratio_t  = L_t / mean(L_1 .. L_{t-1})      (ratio_1 := 1)
    weight_t = std(ratio_1 .. ratio_t) / mean(ratio_1 .. ratio_t)

with the population standard deviation and no normalisation across
auxiliaries. The raw loss is folded into its running mean only after the
weight has been computed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

ONE_PLUS_ONE = "one_plus_one"
COV = "cov"
WEIGHTING_MODES = (ONE_PLUS_ONE, COV)

FIRST_STEP_RATIO = 1.0


@dataclass
class AuxTrack:
    t: int = 0
    loss_mean: float = 0.0    # mean of raw losses up to t-1 after an update returns
    ratio_mean: float = 0.0   # Welford accumulators over the ratio history
    ratio_m2: float = 0.0
    last_ratio: float = 0.0
    weight: float = 0.0
    degenerate: bool = False

    @property
    def ratio_std(self) -> float:
        return math.sqrt(max(self.ratio_m2, 0.0) / self.t) if self.t else 0.0


@dataclass
class CoVState:
    tracks: dict[str, AuxTrack] = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {k: dict(vars(v)) for k, v in sorted(self.tracks.items())}


def _update_track(tr: AuxTrack, loss: float) -> float:
    if not math.isfinite(loss) or loss < 0:
        raise ValueError(f"raw loss must be finite and >= 0, got {loss}")
    tr.t += 1
    if tr.t == 1:
        ratio = FIRST_STEP_RATIO
    elif tr.loss_mean > 0:
        ratio = loss / tr.loss_mean
    else:
        # every earlier loss was exactly zero: no scale to compare against
        ratio = 0.0
    tr.last_ratio = ratio

    delta = ratio - tr.ratio_mean
    tr.ratio_mean += delta / tr.t
    tr.ratio_m2 += delta * (ratio - tr.ratio_mean)

    if tr.ratio_mean > 0:
        tr.weight = tr.ratio_std / tr.ratio_mean
        tr.degenerate = False
    else:
        tr.weight = 0.0
        tr.degenerate = True

    tr.loss_mean += (loss - tr.loss_mean) / tr.t
    return tr.weight


def cov_update(state: CoVState, raw_losses: dict[str, float]) -> dict[str, float]:
    """Advance every named auxiliary by one step and return its new weight."""
    weights = {}
    for name, value in raw_losses.items():
        tr = state.tracks.setdefault(name, AuxTrack())
        weights[name] = _update_track(tr, float(value))
    return weights


def combine_total(l_ic, l_ec, aux: dict, mode: str, weights: dict | None = None):
    """L_ic + L_ec + sum_a w_a L_a; task losses are never reweighted.

    Works on floats and on tensors alike.
    """
    if mode not in WEIGHTING_MODES:
        raise ValueError(f"unknown weighting mode {mode!r}")
    total = l_ic + l_ec
    for name, loss in aux.items():
        if mode == ONE_PLUS_ONE:
            w = 1.0
        else:
            if weights is None or name not in weights:
                raise KeyError(f"no CoV weight for active auxiliary {name!r}")
            w = weights[name]
        total = total + w * loss
    return total


def weight_log_lines(step: int, state: CoVState, raw_losses: dict[str, float],
                     weights: dict[str, float]) -> list[str]:
    """JSON-lines records for the per-step weight trajectory."""
    lines = []
    for name, raw in raw_losses.items():
        tr = state.tracks.get(name)
        lines.append(json.dumps({
            "step": step,
            "name": name,
            "raw_loss": raw,
            "ratio": tr.last_ratio if tr else 1.0,
            "weight": weights[name],
        }))
    return lines
