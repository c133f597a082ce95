"""Training loop, evaluation and the experiment grid."""

from __future__ import annotations

import itertools
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import losses as L
from .data import (
    IGNORE_INDEX,
    TaggedUtterance,
    Vocab,
    build_vocab,
    encode_tokens,
    load_corpus,
    make_batches,
    pair_parallel,
)
from .metrics import MetricsReport, build_report, z_test_proportions
from .model import (
    EncoderConfig,
    ModelParams,
    encode,
    entity_logits,
    init_model,
    intent_logits,
    load_checkpoint,
    save_checkpoint,
)
from .tagging import OUTSIDE, TagScheme
from .tensor import Tensor, backward
from .weighting import (
    COV,
    ONE_PLUS_ONE,
    WEIGHTING_MODES,
    CoVState,
    combine_total,
    cov_update,
    weight_log_lines,
)

log = logging.getLogger(__name__)

ENCODER_KEYS = ("hidden_size", "num_layers", "seq_len", "pooling_mode", "encoder_kind")


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    """One training run. Paths are resolved relative to the config file."""

    eng_train: str
    tar_train: str
    eng_eval: str | None = None
    tar_eval: str | None = None
    output_dir: str | None = None
    name: str = "run"
    aux: list[str] = field(default_factory=list)
    weighting: str = ONE_PLUS_ONE
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.1
    seed: int = 0
    encoder: dict = field(default_factory=dict)
    contrastive_temperature: float = 1.0
    include_outside: bool = True
    min_count: int = 1
    source_language: str | None = None
    target_language: str | None = None
    text: str | None = field(default=None, repr=False, compare=False)

    def validate(self, check_paths: bool = True) -> None:
        unknown = set(self.aux) - set(L.AUX_NAMES)
        if unknown:
            raise ConfigError(f"unknown auxiliary losses: {sorted(unknown)}")
        if len(set(self.aux)) != len(self.aux):
            raise ConfigError("auxiliary losses listed twice")
        if self.weighting not in WEIGHTING_MODES:
            raise ConfigError(f"weighting must be one of {WEIGHTING_MODES}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        bad = set(self.encoder) - set(ENCODER_KEYS)
        if bad:
            raise ConfigError(f"unknown encoder keys: {sorted(bad)}")
        if check_paths:
            for key in ("eng_train", "tar_train", "eng_eval", "tar_eval"):
                p = getattr(self, key)
                if p is not None and not Path(p).is_file():
                    raise ConfigError(f"{key}: no such file {p}")

    @property
    def active_aux(self) -> list[str]:
        return [a for a in L.AUX_NAMES if a in self.aux]

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("text")
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir=None, text: str | None = None) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)} - {"text"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        d = dict(d)
        if base_dir is not None:
            for key in ("eng_train", "tar_train", "eng_eval", "tar_eval", "output_dir"):
                if d.get(key) is not None:
                    d[key] = str(Path(base_dir) / d[key])
        try:
            return cls(**d, text=text)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(d, base_dir=path.parent, text=text)


@dataclass
class RunRecord:
    config: dict
    config_text: str | None
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    checkpoint: str | None = None
    wall_clock: float = 0.0
    encoder_calls: dict = field(default_factory=lambda: {"eng": 0, "tar": 0})
    final: dict = field(default_factory=dict)
    params: ModelParams | None = field(default=None, repr=False, compare=False)

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "params"}

    def loss_trajectory(self) -> list[float]:
        return [s["total"] for s in self.steps]


def sgd_step(params: ModelParams, grads: dict[int, Tensor], lr: float) -> ModelParams:
    """In-place ``p <- p - lr * g`` over parameters in name order; no momentum or decay."""
    if not lr > 0:
        raise ValueError("learning rate must be > 0")
    updates = []
    for name, p in params:
        g = grads.get(p.node_id)
        if g is None:
            continue
        if not np.all(np.isfinite(g.data)):
            raise TrainingError(f"non-finite gradient for {name}")
        updates.append((p, g.data))
    for p, g in updates:
        p.data -= lr * g
    return params


@dataclass
class TrainingData:
    pairs: list
    vocab: Vocab
    scheme: TagScheme
    intents: list[str]
    eng_eval: list[TaggedUtterance] | None = None
    tar_eval: list[TaggedUtterance] | None = None


def prepare_data(config: ExperimentConfig) -> TrainingData:
    eng = load_corpus(config.eng_train, config.source_language)
    tar = load_corpus(config.tar_train, config.target_language)
    pairs = pair_parallel(eng, tar)
    eng_eval = load_corpus(config.eng_eval, config.source_language) if config.eng_eval else None
    tar_eval = load_corpus(config.tar_eval, config.target_language) if config.tar_eval else None
    # only training text feeds the vocabulary, so eval files cannot alter training
    vocab = build_vocab([[e for e, _ in pairs], [t for _, t in pairs]], config.min_count)
    scheme = TagScheme.from_corpus([u.tags for u in eng if u.tags], mode="io")
    if not scheme.entity_types:
        raise ConfigError("English training data carries no entities")
    intents = sorted({u.intent for u in eng})
    return TrainingData(pairs, vocab, scheme, intents, eng_eval, tar_eval)


def _encoder_config(config: ExperimentConfig, data: TrainingData) -> EncoderConfig:
    return EncoderConfig(vocab_size=len(data.vocab), num_intents=len(data.intents),
                         num_entity_classes=data.scheme.num_classes, **config.encoder)


def predict(params: ModelParams, utts: Sequence[TaggedUtterance], vocab: Vocab,
            scheme: TagScheme, batch_size: int = 256):
    """Greedy argmax intents and per-token IO tags (ties go to the lowest index)."""
    seq_len = params.config.seq_len
    intents, tags = [], []
    for start in range(0, len(utts), batch_size):
        chunk = utts[start:start + batch_size]
        ids, mask = encode_tokens(chunk, vocab, seq_len)
        out = encode(params, ids, mask)
        ic = intent_logits(params, out.cls).data
        ec = entity_logits(params, out.tokens).data
        intents += [int(i) for i in np.argmax(ic, axis=1)]
        best = np.argmax(ec, axis=2)
        for r, utt in enumerate(chunk):
            n = len(utt.tokens)
            kept = min(n, seq_len - 1)
            seq = scheme.decode(best[r, 1:1 + kept]) + [OUTSIDE] * (n - kept)
            tags.append(seq)
    return intents, tags


def evaluate_params(params: ModelParams, corpus: Sequence[TaggedUtterance], vocab: Vocab,
                    scheme: TagScheme, intents: Sequence[str]) -> MetricsReport:
    if not corpus:
        raise ValueError("empty evaluation corpus")
    known = set(scheme.entity_types)
    for utt in corpus:
        if utt.tags is None:
            raise ValueError(f"evaluation utterance {utt.id!r} has no gold tags")
        types = {t.split("-", 1)[1] for t in utt.tags if t != OUTSIDE}
        if not types <= known:
            raise ValueError(f"scheme mismatch: {sorted(types - known)} not in model scheme")
    index = {name: i for i, name in enumerate(intents)}
    gold_intents = [index.get(u.intent, -1) for u in corpus]
    pred_intents, pred_tags = predict(params, corpus, vocab, scheme)
    return build_report(pred_intents, gold_intents, pred_tags, [u.tags for u in corpus])


def evaluate(checkpoint, corpus: Sequence[TaggedUtterance]) -> MetricsReport:
    params, meta = load_checkpoint(checkpoint)
    vocab = Vocab(meta["vocab"])
    scheme = TagScheme(meta["entity_types"], mode="io")
    if scheme.num_classes != params.config.num_entity_classes:
        raise ValueError("checkpoint scheme does not match its entity head")
    return evaluate_params(params, corpus, vocab, scheme, meta["intents"])


def _step_losses(params, batch, config: ExperimentConfig, calls: dict):
    out_eng = encode(params, batch.eng_ids, batch.eng_mask)
    calls["eng"] += 1
    ic = intent_logits(params, out_eng.cls)
    ec = entity_logits(params, out_eng.tokens)
    l_ic, l_ec = L.task_loss(ic, ec, batch.y_ic, batch.y_ec, IGNORE_INDEX)
    bundle = L.LossBundle(l_ic, l_ec)

    active = config.active_aux
    if not active:
        return bundle
    # one target encode serves every auxiliary
    out_tar = encode(params, batch.tar_ids, batch.tar_mask)
    calls["tar"] += 1
    if "crossaligner" in active:
        ec_tar = entity_logits(params, out_tar.tokens)
        bundle.l_eng, bundle.l_tar = L.crossaligner_loss(ec, ec_tar, batch.y_ca, params)
        bundle.aux["crossaligner"] = bundle.l_eng + bundle.l_tar
    if "xeroalign" in active:
        bundle.aux["xeroalign"] = L.xeroalign_loss(out_eng.cls, out_tar.cls)
    if "contrastive" in active:
        bundle.aux["contrastive"] = L.contrastive_loss(out_eng.cls, out_tar.cls,
                                                       config.contrastive_temperature)
    if "translate_intent" in active:
        bundle.aux["translate_intent"] = L.translate_intent_loss(
            intent_logits(params, out_tar.cls), batch.y_ic)
    return bundle


def train(config: ExperimentConfig, data: TrainingData | None = None) -> RunRecord:
    config.validate(check_paths=data is None)
    if data is None:
        data = prepare_data(config)
    started = time.perf_counter()
    params = init_model(_encoder_config(config, data), config.seed)
    record = RunRecord(config=config.to_json(), config_text=config.text)
    state = CoVState()
    out_dir = Path(config.output_dir) if config.output_dir else None
    weight_log = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        weight_log = open(out_dir / "weights.jsonl", "w", encoding="utf-8")

    step = 0
    try:
        for epoch in range(1, config.epochs + 1):
            batches = make_batches(data.pairs, data.vocab, data.scheme, data.intents,
                                   params.config.seq_len, config.batch_size,
                                   seed=config.seed * 100003 + epoch, shuffle=True,
                                   include_outside=config.include_outside)
            for batch in batches:
                step += 1
                bundle = _step_losses(params, batch, config, record.encoder_calls)
                raw = {k: v.item() for k, v in bundle.aux.items()}
                values = bundle.values()
                if not all(math.isfinite(v) for v in values.values()):
                    raise TrainingError(f"non-finite loss at step {step}: {json.dumps(values)}")
                if config.weighting == COV:
                    weights = cov_update(state, raw)
                else:
                    weights = {k: 1.0 for k in raw}
                total = combine_total(bundle.l_ic, bundle.l_ec, bundle.aux, config.weighting,
                                      weights)
                entry = {"step": step, "epoch": epoch, **values, "weights": weights,
                         "total": total.item()}
                if not math.isfinite(entry["total"]):
                    raise TrainingError(f"non-finite loss at step {step}: {json.dumps(entry)}")
                record.steps.append(entry)
                if weight_log is not None:
                    for line in weight_log_lines(step, state, raw, weights):
                        weight_log.write(line + "\n")
                sgd_step(params, backward(total), config.learning_rate)

            ep = {"epoch": epoch}
            if data.eng_eval:
                ep["eng"] = evaluate_params(params, data.eng_eval, data.vocab, data.scheme,
                                            data.intents).to_json()
            if data.tar_eval:
                ep["tar"] = evaluate_params(params, data.tar_eval, data.vocab, data.scheme,
                                            data.intents).to_json()
            record.epochs.append(ep)
            log.info("%s epoch %d: %s", config.name, epoch,
                     {k: round(v["overall"], 2) for k, v in ep.items() if k != "epoch"})
    finally:
        if weight_log is not None:
            weight_log.close()

    if record.epochs:
        record.final = {k: v for k, v in record.epochs[-1].items() if k != "epoch"}
    record.wall_clock = time.perf_counter() - started
    if out_dir is not None:
        meta = {"vocab": data.vocab.tokens, "intents": data.intents,
                "entity_types": data.scheme.entity_types, "config": config.to_json()}
        record.checkpoint = str(save_checkpoint(out_dir / "checkpoint.npz", params, meta))
        with open(out_dir / "steps.jsonl", "w", encoding="utf-8") as fh:
            for s in record.steps:
                fh.write(json.dumps(s) + "\n")
        with open(out_dir / "record.json", "w", encoding="utf-8") as fh:
            json.dump(record.to_json(), fh, indent=2)
    record.params = params
    return record


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass
class GridRow:
    name: str
    aux: list[str]
    weighting: str
    status: str
    tar: dict | None = None
    eng: dict | None = None
    error: str | None = None

    @property
    def score(self) -> float:
        for rep in (self.tar, self.eng):
            if rep:
                return rep["overall"]
        return float("-inf")


@dataclass
class GridResult:
    rows: list[GridRow]
    comparisons: list[dict]
    records: list[RunRecord | None] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "comparisons": self.comparisons}

    def table(self) -> str:
        lines = [f"{'rank':>4}  {'name':<32} {'weighting':<12} {'tar acc/F':>12} "
                 f"{'overall':>8}  status"]
        for rank, r in enumerate(self.rows, start=1):
            if r.tar:
                accf = f"{100 * r.tar['intent_accuracy']:.1f}/{100 * r.tar['entity_f1']:.1f}"
                ov = f"{r.tar['overall']:.1f}"
            else:
                accf, ov = "-", "-"
            lines.append(f"{rank:>4}  {r.name:<32} {r.weighting:<12} {accf:>12} {ov:>8}  {r.status}")
        return "\n".join(lines)


def run_grid(configs: Sequence[ExperimentConfig], data: TrainingData | None = None) -> GridResult:
    """Train every config, rank by target Overall and z-test every pair of runs.

    A failing run is recorded and the grid moves on.
    """
    rows, records = [], []
    for cfg in configs:
        try:
            rec = train(cfg, data)
        except Exception as exc:  # keep the grid going
            log.error("run %s failed: %s", cfg.name, exc)
            rows.append(GridRow(cfg.name, cfg.active_aux, cfg.weighting, "failed",
                                error=f"{type(exc).__name__}: {exc}"))
            records.append(None)
            continue
        rows.append(GridRow(cfg.name, cfg.active_aux, cfg.weighting, "ok",
                            rec.final.get("tar"), rec.final.get("eng")))
        records.append(rec)

    order = sorted(range(len(rows)), key=lambda i: -rows[i].score)
    rows = [rows[i] for i in order]
    records = [records[i] for i in order]

    comparisons = []
    for a, b in itertools.combinations([r for r in rows if r.tar], 2):
        ca, cb = a.tar["counts"], b.tar["counts"]
        res = z_test_proportions(ca["n_intents_correct"], ca["n_intents_total"],
                                 cb["n_intents_correct"], cb["n_intents_total"])
        comparisons.append({"a": a.name, "b": b.name,
                            "counts": [ca["n_intents_correct"], ca["n_intents_total"],
                                       cb["n_intents_correct"], cb["n_intents_total"]],
                            **res.to_json()})
    return GridResult(rows, comparisons, records)
