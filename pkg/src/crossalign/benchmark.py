"""The synthetic cipher benchmark used by the experiment grid and the acceptance suite."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .data import (
    CipherSpec,
    build_vocab,
    gen_synthetic,
    pair_parallel,
    with_tags,
    write_corpus,
)
from .synthetic import default_cipher_spec
from .tagging import TagScheme
from .trainer import ExperimentConfig, TrainingData

TRAIN_PER_INTENT = 200
EVAL_PER_INTENT = 40


@dataclass
class BenchmarkSettings:
    epochs: int = 25
    batch_size: int = 32
    learning_rate: float = 0.1
    encoder: dict = field(default_factory=lambda: {"hidden_size": 64, "seq_len": 24,
                                                   "num_layers": 1, "encoder_kind": "bag"})
    noise: float = 0.1


def corpus_files(spec: CipherSpec, out_dir, seed: int, train_per_intent: int = TRAIN_PER_INTENT,
                 eval_per_intent: int = EVAL_PER_INTENT) -> dict[str, Path]:
    """Write eng/tar train and eval JSONL files; only ``tar_eval`` carries target tags."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    eng, tar, _ = gen_synthetic(spec, train_per_intent, seed=2 * seed + 1, id_prefix="train-")
    eeng, etar, egold = gen_synthetic(spec, eval_per_intent, seed=2 * seed + 2, id_prefix="eval-")
    paths = {name: out_dir / f"{name}.jsonl"
             for name in ("eng_train", "tar_train", "eng_eval", "tar_eval")}
    write_corpus(paths["eng_train"], eng)
    write_corpus(paths["tar_train"], tar)
    write_corpus(paths["eng_eval"], eeng)
    write_corpus(paths["tar_eval"], with_tags(etar, egold))
    spec.save(out_dir / "spec.json")
    return paths


def benchmark_data(seed: int, settings: BenchmarkSettings | None = None,
                   spec: CipherSpec | None = None) -> TrainingData:
    """In-memory equivalent of :func:`corpus_files` followed by ``prepare_data``."""
    settings = settings or BenchmarkSettings()
    spec = spec or default_cipher_spec(noise=settings.noise)
    eng, tar, _ = gen_synthetic(spec, TRAIN_PER_INTENT, seed=2 * seed + 1, id_prefix="train-")
    eeng, etar, egold = gen_synthetic(spec, EVAL_PER_INTENT, seed=2 * seed + 2, id_prefix="eval-")
    pairs = pair_parallel(eng, tar)
    return TrainingData(pairs=pairs,
                        vocab=build_vocab([eng, [t for _, t in pairs]]),
                        scheme=TagScheme.from_corpus([u.tags for u in eng]),
                        intents=sorted({u.intent for u in eng}),
                        eng_eval=eeng,
                        tar_eval=with_tags(etar, egold))


def benchmark_config(aux, weighting: str = "one_plus_one", seed: int = 0,
                     settings: BenchmarkSettings | None = None, **paths) -> ExperimentConfig:
    settings = settings or BenchmarkSettings()
    aux = list(aux)
    name = "+".join(aux) if aux else "zero_shot"
    if len(aux) > 1:
        name += f"({weighting})"
    return ExperimentConfig(eng_train=paths.get("eng_train", "<memory>"),
                            tar_train=paths.get("tar_train", "<memory>"),
                            eng_eval=paths.get("eng_eval"), tar_eval=paths.get("tar_eval"),
                            output_dir=paths.get("output_dir"),
                            name=f"{name}@seed{seed}", aux=aux, weighting=weighting,
                            epochs=settings.epochs, batch_size=settings.batch_size,
                            learning_rate=settings.learning_rate, seed=seed,
                            encoder=dict(settings.encoder))


def write_grid_configs(out_dir, paths: dict[str, Path], seed: int = 0,
                       settings: BenchmarkSettings | None = None) -> list[Path]:
    """Zero-shot, the four single losses and every 2/3/4-loss combination under both weightings."""
    from itertools import combinations

    from .losses import AUX_NAMES

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    setups = [([], "one_plus_one")] + [([a], "one_plus_one") for a in AUX_NAMES]
    for k in (2, 3, 4):
        for combo in combinations(AUX_NAMES, k):
            setups += [(list(combo), "cov"), (list(combo), "one_plus_one")]
    written = []
    for i, (aux, weighting) in enumerate(setups):
        cfg = benchmark_config(aux, weighting, seed, settings)
        d = cfg.to_json()
        for key, p in paths.items():
            d[key] = str(Path(p).resolve())
        d["output_dir"] = str((out_dir / "runs" / f"{i:02d}").resolve())
        path = out_dir / f"{i:02d}_{cfg.name.split('@')[0].replace('+', '_')}.json"
        path.write_text(json.dumps(d, indent=2) + "\n", encoding="utf-8")
        written.append(path)
    return written

