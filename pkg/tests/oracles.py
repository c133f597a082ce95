"""Slow, obviously-correct reference implementations used as test oracles."""

import numpy as np


def cov_weights_from_scratch(losses) -> list[float]:
    """Recompute every step's CoV weight from the full loss history, no running state."""
    losses = np.asarray(losses, dtype=np.float64)
    # ratio k only looks at losses before k, so the ratio history is fixed up front
    ratios = np.array([1.0] + [losses[k] / losses[:k].mean() for k in range(1, len(losses))])
    return [float(ratios[:t].std() / ratios[:t].mean()) for t in range(1, len(losses) + 1)]


def spans_brute_force(tags) -> set[tuple[int, int, str]]:
    """Enumerate every (i, j) window and keep those that form exactly one BIO entity."""
    out = set()
    n = len(tags)
    for i in range(n):
        if not tags[i].startswith("B-"):
            continue
        etype = tags[i][2:]
        for j in range(i, n):
            inner_ok = all(tags[k] == f"I-{etype}" for k in range(i + 1, j + 1))
            closes = j + 1 == n or tags[j + 1] != f"I-{etype}"
            if inner_ok and closes:
                out.add((i, j, etype))
    return out


def io_to_bio_brute_force(io_tags) -> list[str]:
    out = []
    for k, tag in enumerate(io_tags):
        if tag == "O":
            out.append("O")
        elif k > 0 and io_tags[k - 1] == tag:
            out.append(tag)
        else:
            out.append("B-" + tag[2:])
    return out


def counts_brute_force(pred_io, gold_bio) -> tuple[int, int, int]:
    tp = fp = fn = 0
    for pred, gold in zip(pred_io, gold_bio):
        p = spans_brute_force(io_to_bio_brute_force(pred))
        g = spans_brute_force(gold)
        tp += len(p & g)
        fp += len(p - g)
        fn += len(g - p)
    return tp, fp, fn


def random_bio(rng, length, types, p_entity=0.4, p_continue=0.6):
    """Valid BIO sequence; adjacent same-type entities are allowed."""
    tags = []
    prev = None
    for _ in range(length):
        if prev is not None and rng.random() < p_continue:
            tags.append(f"I-{prev}")
        elif rng.random() < p_entity:
            prev = types[rng.integers(len(types))]
            tags.append(f"B-{prev}")
        else:
            prev = None
            tags.append("O")
    return tags


def random_io(rng, length, types, p_o=0.5):
    return ["O" if rng.random() < p_o else f"I-{types[rng.integers(len(types))]}"
            for _ in range(length)]
