import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crossalign.data import build_vocab, gen_synthetic, pair_parallel, with_tags, write_corpus  # noqa: E402
from crossalign.synthetic import default_cipher_spec  # noqa: E402
from crossalign.tagging import TagScheme  # noqa: E402
from crossalign.trainer import ExperimentConfig, TrainingData  # noqa: E402

TINY_ENCODER = {"hidden_size": 12, "seq_len": 16, "num_layers": 1}


@pytest.fixture(scope="session")
def tiny_corpus():
    spec = default_cipher_spec(seed=0, noise=0.1)
    eng, tar, _ = gen_synthetic(spec, 6, seed=1, id_prefix="train-")
    eeng, etar, egold = gen_synthetic(spec, 3, seed=2, id_prefix="eval-")
    return spec, eng, tar, eeng, with_tags(etar, egold)


@pytest.fixture(scope="session")
def tiny_data(tiny_corpus):
    _, eng, tar, eeng, etar = tiny_corpus
    pairs = pair_parallel(eng, tar)
    return TrainingData(pairs, build_vocab([eng, tar]), TagScheme.from_corpus([u.tags for u in eng]),
                        sorted({u.intent for u in eng}), eeng, etar)


@pytest.fixture
def corpus_dir(tmp_path, tiny_corpus):
    _, eng, tar, eeng, etar = tiny_corpus
    for name, corpus in [("eng_train", eng), ("tar_train", tar), ("eng_eval", eeng), ("tar_eval", etar)]:
        write_corpus(tmp_path / f"{name}.jsonl", corpus)
    return tmp_path


def tiny_config(aux=(), weighting="one_plus_one", **kw):
    base = dict(eng_train="<memory>", tar_train="<memory>", name="tiny", aux=list(aux),
                weighting=weighting, epochs=2, batch_size=8, learning_rate=0.1, seed=0,
                encoder=dict(TINY_ENCODER))
    base.update(kw)
    return ExperimentConfig(**base)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
