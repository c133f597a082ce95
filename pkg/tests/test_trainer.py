import json

import numpy as np
import pytest

from crossalign import tensor as T
from crossalign.model import EncoderConfig, init_model
from crossalign.trainer import (
    ConfigError,
    ExperimentConfig,
    TrainingError,
    evaluate,
    run_grid,
    sgd_step,
    train,
)
from crossalign.weighting import CoVState, cov_update

from conftest import tiny_config


def _params():
    return init_model(EncoderConfig(vocab_size=5, num_intents=2, num_entity_classes=2,
                                    hidden_size=2, seq_len=3), 0)


def test_sgd_step_examples():
    params = _params()
    name = "ic.bias"
    params.tensors[name] = T.parameter([1.0, 1.0])
    node = params[name].node_id
    sgd_step(params, {node: T.constant([0.5, 0.0])}, lr=1.0)
    assert params[name].data.tolist() == [0.5, 1.0]
    before = {k: v.data.copy() for k, v in params}
    sgd_step(params, {}, lr=1.0)
    assert all(np.array_equal(before[k], v.data) for k, v in params)


def test_sgd_two_half_steps_equal_one_step():
    a, b = _params(), _params()
    g = np.random.default_rng(0).normal(size=a["ic.weight"].shape)
    sgd_step(a, {a["ic.weight"].node_id: T.constant(g)}, lr=0.2)
    for _ in range(2):
        sgd_step(b, {b["ic.weight"].node_id: T.constant(g)}, lr=0.1)
    np.testing.assert_allclose(a["ic.weight"].data, b["ic.weight"].data, rtol=0, atol=1e-15)


def test_sgd_rejects_non_finite_gradients():
    params = _params()
    with pytest.raises(TrainingError):
        sgd_step(params, {params["ic.bias"].node_id: T.constant([np.nan, 0.0])}, lr=0.1)


def test_zero_shot_never_encodes_target(tiny_data):
    rec = train(tiny_config(), tiny_data)
    assert rec.encoder_calls["tar"] == 0
    assert rec.encoder_calls["eng"] == len(rec.steps)


def test_each_auxiliary_encodes_target_once_per_step(tiny_data):
    rec = train(tiny_config(["crossaligner", "xeroalign", "contrastive", "translate_intent"]), tiny_data)
    assert rec.encoder_calls["tar"] == rec.encoder_calls["eng"] == len(rec.steps)


@pytest.mark.parametrize("aux, weighting", [((), "one_plus_one"), (("crossaligner", "xeroalign"), "cov")])
def test_training_is_deterministic(tiny_data, aux, weighting):
    a = train(tiny_config(aux, weighting), tiny_data)
    b = train(tiny_config(aux, weighting), tiny_data)
    assert a.loss_trajectory() == b.loss_trajectory()
    assert a.final == b.final
    for name, t in a.params:
        assert np.array_equal(t.data, b.params[name].data)


def test_cov_weights_start_at_zero_and_match_oracle(tiny_data):
    rec = train(tiny_config(["crossaligner", "xeroalign"], "cov"), tiny_data)
    assert rec.steps[0]["weights"] == {"crossaligner": 0.0, "xeroalign": 0.0}
    state = CoVState()
    for s in rec.steps:
        expected = cov_update(state, {"crossaligner": s["crossaligner"], "xeroalign": s["xeroalign"]})
        assert s["weights"] == expected


@pytest.mark.parametrize("weighting", ["cov", "one_plus_one"])
def test_total_decomposes_into_logged_parts(tiny_data, weighting):
    rec = train(tiny_config(["crossaligner", "contrastive"], weighting), tiny_data)
    for s in rec.steps:
        assert s["crossaligner"] == pytest.approx(s["l_eng"] + s["l_tar"], abs=1e-12)
        parts = s["l_ic"] + s["l_ec"] + sum(s["weights"][k] * s[k] for k in ("crossaligner", "contrastive"))
        assert abs(s["total"] - parts) <= 1e-12


def test_training_reduces_task_loss(tiny_data):
    rec = train(tiny_config(epochs=4), tiny_data)
    first = np.mean([s["l_ic"] + s["l_ec"] for s in rec.steps[:3]])
    last = np.mean([s["l_ic"] + s["l_ec"] for s in rec.steps[-3:]])
    assert last < first


def test_run_artifacts_and_evaluate(tmp_path, tiny_data, tiny_corpus):
    rec = train(tiny_config(["crossaligner"], output_dir=str(tmp_path / "run"), epochs=40), tiny_data)
    run = tmp_path / "run"
    for f in ("checkpoint.npz", "steps.jsonl", "record.json", "weights.jsonl"):
        assert (run / f).is_file()
    saved = json.loads((run / "record.json").read_text())
    assert saved["final"] == json.loads(json.dumps(rec.final))
    _, eng, *_ = tiny_corpus
    a, b = evaluate(run / "checkpoint.npz", eng), evaluate(run / "checkpoint.npz", eng)
    assert a == b
    assert a.intent_accuracy > 0.9  # training-set fit
    rep = evaluate(run / "checkpoint.npz", tiny_data.tar_eval)
    assert rep.overall == pytest.approx(rec.final["tar"]["overall"])


def test_evaluate_rejects_unknown_entity_types(tmp_path, tiny_data, tiny_corpus):
    train(tiny_config(output_dir=str(tmp_path), epochs=1), tiny_data)
    _, eng, *_ = tiny_corpus
    bad = [type(eng[0])(eng[0].id, "en", eng[0].tokens, eng[0].intent, ["B-planet"] + ["O"] * (len(eng[0].tokens) - 1))]
    with pytest.raises(ValueError, match="scheme"):
        evaluate(tmp_path / "checkpoint.npz", bad)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.parametrize("aux, weighting", [(["xeroalign"], "one_plus_one"),
                                            (["crossaligner", "xeroalign"], "cov")])
def test_diverging_run_aborts_with_dump(tiny_data, aux, weighting):
    with pytest.raises(TrainingError, match="non-finite"):
        train(tiny_config(aux, weighting, learning_rate=1e6, epochs=3), tiny_data)


@pytest.mark.parametrize("change, match", [
    ({"aux": ["bogus"]}, "unknown auxiliary"),
    ({"aux": ["xeroalign", "xeroalign"]}, "twice"),
    ({"weighting": "max"}, "weighting"),
    ({"epochs": 0}, "epochs"),
    ({"learning_rate": 0.0}, "learning_rate"),
    ({"encoder": {"depth": 3}}, "encoder"),
])
def test_config_validation(change, match):
    with pytest.raises(ConfigError, match=match):
        tiny_config(**change).validate(check_paths=False)


def test_config_load_resolves_paths_and_rejects_unknown_keys(corpus_dir):
    cfg = {"eng_train": "eng_train.jsonl", "tar_train": "tar_train.jsonl", "aux": ["contrastive"]}
    (corpus_dir / "c.json").write_text(json.dumps(cfg))
    loaded = ExperimentConfig.load(corpus_dir / "c.json")
    loaded.validate()
    assert loaded.eng_train == str(corpus_dir / "eng_train.jsonl")
    assert loaded.text == json.dumps(cfg)
    (corpus_dir / "bad.json").write_text(json.dumps({**cfg, "lr": 1}))
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.load(corpus_dir / "bad.json")
    with pytest.raises(ConfigError, match="no such file"):
        ExperimentConfig.from_dict({**cfg, "eng_train": "missing.jsonl"}, corpus_dir).validate()


def test_train_from_files(corpus_dir):
    cfg = ExperimentConfig(eng_train=str(corpus_dir / "eng_train.jsonl"),
                           tar_train=str(corpus_dir / "tar_train.jsonl"),
                           tar_eval=str(corpus_dir / "tar_eval.jsonl"),
                           epochs=1, batch_size=8, encoder={"hidden_size": 8, "seq_len": 16})
    rec = train(cfg)
    assert set(rec.final) == {"tar"}


def test_grid_of_one_and_duplicates(tiny_data):
    one = run_grid([tiny_config(epochs=1)], tiny_data)
    assert len(one.rows) == 1 and one.comparisons == []
    dup = run_grid([tiny_config(["xeroalign"], epochs=1), tiny_config(["xeroalign"], epochs=1)], tiny_data)
    assert dup.rows[0].tar == dup.rows[1].tar
    assert dup.comparisons[0]["z"] == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_grid_survives_a_failing_run(tiny_data):
    res = run_grid([tiny_config(["xeroalign"], learning_rate=1e6, epochs=2), tiny_config(epochs=1)], tiny_data)
    assert [r.status for r in res.rows] == ["ok", "failed"]
    assert "non-finite" in res.rows[1].error
    assert "failed" in res.table()


def test_target_eval_files_do_not_change_training(tiny_data):
    from dataclasses import replace
    blind = replace(tiny_data, eng_eval=None, tar_eval=None)
    a = train(tiny_config(["crossaligner", "contrastive"], "cov"), tiny_data)
    b = train(tiny_config(["crossaligner", "contrastive"], "cov"), blind)
    assert a.steps == b.steps
    assert b.final == {}


def test_crossaligner_step_loss_is_the_four_term_sum(tiny_data):
    rec = train(tiny_config(["crossaligner"]), tiny_data)
    for s in rec.steps:
        assert s["total"] == (s["l_ic"] + s["l_ec"]) + (s["l_eng"] + s["l_tar"])
        assert abs(s["total"] - (s["l_ic"] + s["l_ec"] + s["l_eng"] + s["l_tar"])) <= 1e-12


def test_reported_overall_is_mean_of_percentages(tiny_data):
    from crossalign.metrics import overall_score
    rep = train(tiny_config(epochs=1), tiny_data).final["tar"]
    assert rep["overall"] == overall_score(100 * rep["intent_accuracy"], 100 * rep["entity_f1"])
