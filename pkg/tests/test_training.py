import numpy as np
import pytest

from synthetic import classification_corpus, lookup_corpus, pattern_config
from seqlab.autodiff import TrainingError
from seqlab.data import Instance, Token, write_classification_corpus, write_labeling_corpus
from seqlab.inference import EvaluationError
from seqlab.model import SequenceModel
from seqlab.training import (
    CheckpointError,
    decode,
    load_checkpoint,
    predict_corpus,
    read_checkpoint,
    save_checkpoint,
    throughput_report,
    train,
)


def fit(pattern="PureTNN", n=30, **overrides):
    values = dict(iteration=3)
    values.update(overrides)
    return train(pattern_config(pattern, **values), train_data=lookup_corpus(n, seed=2))


def params(model):
    return {name: p.data.copy() for name, p in model.named_parameters()}


def test_same_seed_same_losses():
    a, b = fit(), fit()
    assert [h.loss for h in a.history] == [h.loss for h in b.history]
    c = fit(seed=4)
    assert [h.loss for h in a.history] != [h.loss for h in c.history]


def test_zero_iterations_keeps_initialization():
    from seqlab.data import build_alphabets
    from seqlab.model import build_model

    config = pattern_config("PureTNN", iteration=0)
    data = lookup_corpus(30, seed=2)
    result = train(config, train_data=data)
    fresh = build_model(config, build_alphabets(data, config.feature_names))
    assert result.best_epoch == 0 and result.history == []
    for name, value in params(fresh).items():
        np.testing.assert_array_equal(params(result.model)[name], value)


def test_best_metric_is_the_history_maximum_and_earliest_wins():
    result = fit(iteration=6)
    metrics = [h.dev.main_metric for h in result.history]
    assert result.best_metric == max(metrics)
    assert result.best_epoch == metrics.index(max(metrics)) + 1


def test_learning_rate_decay_schedule():
    result = fit(optimizer="sgd", learning_rate=0.1, lr_decay=0.5, iteration=4)
    assert [h.learning_rate for h in result.history] == pytest.approx([0.1 / (1 + 0.5 * k) for k in range(4)])


def test_nan_loss_aborts_with_epoch_and_batch(monkeypatch):
    original = SequenceModel.loss
    calls = {"n": 0}

    def poisoned(self, batch, train=True):
        calls["n"] += 1
        out = original(self, batch, train)
        if calls["n"] == 5:  # 30 sentences, batch 10: second epoch, second batch
            out.data = np.array(np.nan)
        return out

    monkeypatch.setattr(SequenceModel, "loss", poisoned)
    with pytest.raises(TrainingError, match=r"epoch 2, batch 2"):
        fit()


def test_checkpoint_round_trip_is_byte_identical(tmp_path):
    result = fit(pattern="TNNPlusPLM", high_level_transformer="synthetic:8")
    first, second = tmp_path / "a.model", tmp_path / "b.model"
    save_checkpoint(first, result.model, result.optimizer)
    ckpt = read_checkpoint(first)
    assert ckpt.optimizer["kind"] == "adam" and ckpt.optimizer_buffers
    model = load_checkpoint(first)
    save_checkpoint(second, model, result.optimizer)
    assert first.read_bytes() == second.read_bytes()
    data = lookup_corpus(12, seed=9)
    assert [p.labels for p in predict_corpus(model, data, 4)] == \
           [p.labels for p in predict_corpus(result.model, data, 4)]


def test_checkpoint_errors(tmp_path):
    result = fit()
    path = tmp_path / "m.model"
    save_checkpoint(path, result.model)
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "missing.model")
    (tmp_path / "junk.model").write_bytes(b"not a zip")
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "junk.model")
    ckpt = read_checkpoint(path)
    ckpt.params["crf.transitions"] = np.zeros((3, 3))
    from seqlab.training import model_from_checkpoint
    with pytest.raises(CheckpointError, match="crf.transitions"):
        model_from_checkpoint(ckpt)


def decode_config(tmp_path, model_path, raw, **overrides):
    values = dict(status="decode", model_dir=str(model_path), raw_dir=str(raw),
                  decode_dir=str(tmp_path / "out.txt"))
    values.update(overrides)
    return pattern_config("PureTNN", **values)


def trained_model_file(tmp_path, **overrides):
    result = fit(iteration=15, n=50, **overrides)
    path = tmp_path / "m.model"
    save_checkpoint(path, result.model)
    return path


def test_decode_writes_predictions_and_metrics(tmp_path):
    model_path = trained_model_file(tmp_path)
    gold = lookup_corpus(5, seed=11)
    write_labeling_corpus(gold, tmp_path / "raw.txt")
    result = decode(decode_config(tmp_path, model_path, tmp_path / "raw.txt"))
    lines = (tmp_path / "out.txt").read_text().split("\n\n")
    first = lines[0].splitlines()[0].split()
    assert first[0] == gold[0].words[0] and first[1] == gold[0].labels[0] and len(first) == 3
    assert result.report.token_accuracy == 1.0
    assert "accuracy" in (tmp_path / "out.txt.metrics").read_text()


def test_decode_rejects_unseen_gold_labels(tmp_path):
    model_path = trained_model_file(tmp_path)
    bad = [Instance([Token("alice", {})], ["B-MISC"])]
    write_labeling_corpus(bad, tmp_path / "raw.txt")
    with pytest.raises(EvaluationError, match="B-MISC"):
        decode(decode_config(tmp_path, model_path, tmp_path / "raw.txt"))


def test_decode_empty_raw_file(tmp_path):
    model_path = trained_model_file(tmp_path)
    (tmp_path / "raw.txt").write_text("")
    result = decode(decode_config(tmp_path, model_path, tmp_path / "raw.txt"))
    assert result.predictions == [] and result.sentences_per_second == 0.0
    assert (tmp_path / "out.txt").read_text() == ""


def test_nbest_blocks_cover_every_path(tmp_path):
    # two labels, two-token sentences: exactly four label sequences exist
    data = [Instance([Token(w, {}) for w in ws], labs)
            for ws, labs in [(["a", "b"], ["X", "Y"]), (["b", "a"], ["Y", "X"])] * 5]
    result = train(pattern_config("PureTNN", iteration=2), train_data=data)
    path = tmp_path / "m.model"
    save_checkpoint(path, result.model)
    write_labeling_corpus(data[:1], tmp_path / "raw.txt")
    out = decode(decode_config(tmp_path, path, tmp_path / "raw.txt", nbest=4))
    assert sum(out.predictions[0].nbest.probs) == pytest.approx(1.0, abs=1e-6)
    blocks = [b for b in (tmp_path / "out.txt.nbest").read_text().strip().split("\n\n")]
    assert len(blocks) == 1
    rows = blocks[0].splitlines()
    headers, paths = rows[0::2], rows[1::2]
    assert len(headers) == 4 and len(set(paths)) == 4
    assert sum(float(h.split()[3]) for h in headers) == pytest.approx(1.0, abs=4e-6)  # printed to 6 places
    assert [int(h.split()[1]) for h in headers] == [1, 2, 3, 4]


def test_decode_config_must_match_checkpoint(tmp_path):
    model_path = trained_model_file(tmp_path)
    write_labeling_corpus(lookup_corpus(2), tmp_path / "raw.txt")
    with pytest.raises(CheckpointError, match="sentence_classification"):
        decode(decode_config(tmp_path, model_path, tmp_path / "raw.txt", sentence_classification=True,
                             use_crf=False, classifier_head="mean_pool"))
    from seqlab.representation import FeatureSpec
    with pytest.raises(CheckpointError, match=r"\[Cap\]"):
        decode(decode_config(tmp_path, model_path, tmp_path / "raw.txt", features=[FeatureSpec("[Cap]")]))


def test_classification_decode_writes_labels_and_attention(tmp_path):
    data = classification_corpus(40, seed=1)
    config = pattern_config("PureTNN", sentence_classification=True, use_crf=False, iteration=3)
    result = train(config, train_data=data)
    path = tmp_path / "c.model"
    save_checkpoint(path, result.model)
    write_classification_corpus(data[:3], tmp_path / "raw.txt")
    out = decode(decode_config(tmp_path, path, tmp_path / "raw.txt", sentence_classification=True,
                               use_crf=False))
    assert (tmp_path / "out.txt").read_text().splitlines() == [p.class_label for p in out.predictions]
    blocks = (tmp_path / "out.txt.attention").read_text().strip().split("\n\n")
    assert len(blocks) == 3
    weights = [float(line.split("\t")[1]) for line in blocks[0].splitlines()]
    assert len(weights) == len(data[0].words) and sum(weights) == pytest.approx(1.0, abs=1e-6)


def test_throughput_rows_and_empty_corpus():
    model = fit(iteration=1).model
    rows, table = throughput_report(model, lookup_corpus(20), (1, 4, 16))
    assert [r["batch_size"] for r in rows] == [1, 4, 16]
    assert all(r["sentences"] == 20 and r["sentences_per_second"] > 0 for r in rows)
    assert len(table.splitlines()) == 5
    with pytest.raises(ValueError, match="empty corpus"):
        throughput_report(model, [])
