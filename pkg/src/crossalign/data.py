"""Corpora, parallel pairing, vocabulary, batching and the synthetic cipher language."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .tagging import TagScheme, bio_to_io, repair_bio, split_tag, transform_labels

log = logging.getLogger(__name__)

PAD, CLS, OOV = "<pad>", "<cls>", "<unk>"
PAD_ID, CLS_ID, OOV_ID = 0, 1, 2
IGNORE_INDEX = -100


class CorpusError(ValueError):
    pass


@dataclass
class TaggedUtterance:
    id: str
    language: str
    tokens: list[str]
    intent: str
    tags: list[str] | None = None

    def __post_init__(self):
        if not self.intent:
            raise CorpusError(f"utterance {self.id!r}: empty intent")
        if self.tags is not None and len(self.tags) != len(self.tokens):
            raise CorpusError(f"utterance {self.id!r}: {len(self.tags)} tags for "
                              f"{len(self.tokens)} tokens")

    def to_json(self) -> dict:
        d = {"id": self.id, "language": self.language, "tokens": self.tokens,
             "intent": self.intent}
        if self.tags is not None:
            d["tags"] = self.tags
        return d


def load_corpus(path, expected_language: str | None = None) -> list[TaggedUtterance]:
    """Read a JSON-lines corpus; stray I- tags are repaired to B- with a warning."""
    corpus = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                utt = TaggedUtterance(id=str(rec["id"]), language=rec["language"],
                                      tokens=list(rec["tokens"]), intent=rec["intent"],
                                      tags=list(rec["tags"]) if rec.get("tags") is not None else None)
            except (json.JSONDecodeError, KeyError, TypeError, CorpusError) as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
            if expected_language is not None and utt.language != expected_language:
                raise CorpusError(f"{path}:{lineno}: language {utt.language!r}, "
                                  f"expected {expected_language!r}")
            if utt.tags is not None:
                try:
                    fixed, violations = repair_bio(utt.tags)
                except ValueError as exc:
                    raise CorpusError(f"{path}:{lineno}: {exc}") from None
                if violations:
                    log.warning("%s:%d: repaired %d BIO violation(s) in %s",
                                path, lineno, len(violations), utt.id)
                    utt.tags = fixed
            corpus.append(utt)
    return corpus


def write_corpus(path, corpus: Iterable[TaggedUtterance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for utt in corpus:
            fh.write(json.dumps(utt.to_json(), ensure_ascii=False) + "\n")


def pair_parallel(eng: Sequence[TaggedUtterance], tar: Sequence[TaggedUtterance]):
    """Join target utterances to English ones by id, keeping English order.

    Target tags are dropped: training never sees target annotation.
    """
    by_id: dict[str, TaggedUtterance] = {}
    for utt in tar:
        if utt.id in by_id:
            raise CorpusError(f"duplicate target id {utt.id!r}")
        by_id[utt.id] = utt
    pairs = []
    for e in eng:
        t = by_id.get(e.id)
        if t is None:
            raise CorpusError(f"target corpus is missing id {e.id!r}")
        pairs.append((e, TaggedUtterance(t.id, t.language, list(t.tokens), t.intent, None)))
    return pairs


@dataclass
class Vocab:
    tokens: list[str]

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self.index.get(token, OOV_ID)


def build_vocab(corpora: Iterable[Sequence[TaggedUtterance]], min_count: int = 1) -> Vocab:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(tok for corpus in corpora for utt in corpus for tok in utt.tokens)
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocab([PAD, CLS, OOV] + [t for t in kept if t not in (PAD, CLS, OOV)])


def encode_tokens(utts: Sequence[TaggedUtterance], vocab: Vocab, seq_len: int):
    """Token id and mask matrices with CLS at position 0; long utterances are truncated."""
    ids = np.full((len(utts), seq_len), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(utts), seq_len), dtype=np.int64)
    ids[:, 0] = CLS_ID
    mask[:, 0] = 1
    for r, utt in enumerate(utts):
        toks = utt.tokens
        if len(toks) > seq_len - 1:
            log.warning("utterance %s truncated from %d to %d tokens", utt.id, len(toks), seq_len - 1)
            toks = toks[:seq_len - 1]
        ids[r, 1:1 + len(toks)] = [vocab[t] for t in toks]
        mask[r, 1:1 + len(toks)] = 1
    return ids, mask


@dataclass
class ParallelBatch:
    ids: list[str]
    eng_ids: np.ndarray
    eng_mask: np.ndarray
    tar_ids: np.ndarray
    tar_mask: np.ndarray
    y_ic: np.ndarray
    y_ec: np.ndarray
    y_ca: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


def make_batches(pairs, vocab: Vocab, scheme: TagScheme, intents: Sequence[str], seq_len: int,
                 batch_size: int, seed: int = 0, shuffle: bool = True,
                 include_outside: bool = True) -> list[ParallelBatch]:
    """Pad, index and label parallel pairs; all labels come from the English side.

    A trailing batch of a single pair is merged into the previous one so every
    batch has in-batch negatives for the contrastive loss.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    intent_index = {name: i for i, name in enumerate(intents)}
    order = np.arange(len(pairs))
    if shuffle:
        np.random.default_rng(seed).shuffle(order)
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        last = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], last])

    batches = []
    for chunk in chunks:
        eng = [pairs[i][0] for i in chunk]
        tar = [pairs[i][1] for i in chunk]
        eng_ids, eng_mask = encode_tokens(eng, vocab, seq_len)
        tar_ids, tar_mask = encode_tokens(tar, vocab, seq_len)
        y_ec = np.full((len(chunk), seq_len), IGNORE_INDEX, dtype=np.int64)
        y_ca = np.zeros((len(chunk), scheme.num_classes))
        for r, utt in enumerate(eng):
            if utt.tags is None:
                raise CorpusError(f"English utterance {utt.id!r} has no tags")
            io = scheme.encode(bio_to_io(utt.tags))[:seq_len - 1]
            y_ec[r, 1:1 + len(io)] = io
            y_ca[r] = transform_labels(io, scheme.num_classes, include_outside)
        try:
            y_ic = np.array([intent_index[u.intent] for u in eng], dtype=np.int64)
        except KeyError as exc:
            raise CorpusError(f"unknown intent {exc.args[0]!r}") from None
        batches.append(ParallelBatch([u.id for u in eng], eng_ids, eng_mask, tar_ids, tar_mask,
                                     y_ic, y_ec, y_ca))
    return batches


# ---------------------------------------------------------------------------
# synthetic cipher language
# ---------------------------------------------------------------------------

_SLOT = re.compile(r"^\{(\w+)\}$")


@dataclass
class CipherSpec:
    """Templates and fillers for the source language plus a word cipher for the target.

    ``templates`` maps intent -> list of whitespace-separated templates where a
    token ``{type}`` is replaced by a filler phrase of that entity type.
    ``noise`` is the probability of inserting one of ``noise_words`` (tagged O)
    after a target token that does not sit inside an entity.
    """

    templates: dict[str, list[str]]
    slot_fillers: dict[str, list[str]]
    cipher: dict[str, str]
    noise: float = 0.0
    noise_words: list[str] = field(default_factory=list)
    source_language: str = "en"
    target_language: str = "xx"

    def validate(self) -> None:
        if not self.templates:
            raise ValueError("cipher spec has no templates")
        values = list(self.cipher.values())
        if len(set(values)) != len(values):
            raise ValueError("cipher is not injective")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must lie in [0, 1]")
        if self.noise > 0 and not self.noise_words:
            raise ValueError("noise > 0 needs noise_words")
        for intent, temps in self.templates.items():
            for temp in temps:
                for tok in temp.split():
                    m = _SLOT.match(tok)
                    if m and not self.slot_fillers.get(m.group(1)):
                        raise ValueError(f"slot type {m.group(1)!r} used by {intent!r} has no fillers")

    @property
    def entity_types(self) -> list[str]:
        return sorted(self.slot_fillers)

    @property
    def intents(self) -> list[str]:
        return sorted(self.templates)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "CipherSpec":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "CipherSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, ensure_ascii=False)


def _realize(template: str, spec: CipherSpec, rng: np.random.Generator):
    tokens, tags = [], []
    for tok in template.split():
        m = _SLOT.match(tok)
        if m:
            etype = m.group(1)
            fillers = spec.slot_fillers[etype]
            words = fillers[rng.integers(len(fillers))].split()
            tokens += words
            tags += [f"B-{etype}"] + [f"I-{etype}"] * (len(words) - 1)
        else:
            tokens.append(tok)
            tags.append("O")
    return tokens, tags


def translate(tokens: Sequence[str], tags: Sequence[str], spec: CipherSpec,
              rng: np.random.Generator):
    out_tokens, out_tags = [], []
    for i, (tok, tag) in enumerate(zip(tokens, tags)):
        if tok not in spec.cipher:
            raise KeyError(f"no cipher entry for {tok!r}")
        out_tokens.append(spec.cipher[tok])
        out_tags.append(tag)
        next_inside = i + 1 < len(tags) and split_tag(tags[i + 1])[0] == "I"
        if spec.noise > 0 and not next_inside and rng.random() < spec.noise:
            out_tokens.append(spec.noise_words[rng.integers(len(spec.noise_words))])
            out_tags.append("O")
    return out_tokens, out_tags


def gen_synthetic(spec: CipherSpec, n_per_intent: int, seed: int, id_prefix: str = ""):
    """Returns (english corpus, untagged target corpus, gold target tags by id)."""
    spec.validate()
    if n_per_intent < 1:
        raise ValueError("n_per_intent must be >= 1")
    rng = np.random.default_rng(seed)
    eng, tar, gold = [], [], {}
    for intent in spec.intents:
        temps = spec.templates[intent]
        for k in range(n_per_intent):
            uid = f"{id_prefix}{intent}-{k:05d}"
            tokens, tags = _realize(temps[rng.integers(len(temps))], spec, rng)
            t_tokens, t_tags = translate(tokens, tags, spec, rng)
            eng.append(TaggedUtterance(uid, spec.source_language, tokens, intent, tags))
            tar.append(TaggedUtterance(uid, spec.target_language, t_tokens, intent, None))
            gold[uid] = t_tags
    return eng, tar, gold


def with_tags(corpus: Sequence[TaggedUtterance], tags_by_id: dict[str, list[str]]):
    """Attach evaluation-only gold tags to a copy of ``corpus``."""
    return [TaggedUtterance(u.id, u.language, list(u.tokens), u.intent, list(tags_by_id[u.id]))
            for u in corpus]


def invert_cipher(tokens: Sequence[str], spec: CipherSpec) -> list[str]:
    inverse = {v: k for k, v in spec.cipher.items()}
    return [inverse[t] for t in tokens]
