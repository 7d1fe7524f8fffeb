import math

import pytest

import qreform


def test_tokenize():
    assert qreform.tokenize("getHttpResponse") == ["get", "http", "response"]
    with pytest.raises(qreform.Error):
        qreform.tokenize("   ")


def test_corruption_round_trip():
    sample = qreform.corrupt_at([10, 11, 12, 13, 14, 15, 16], 5)
    assert sample.target_span == [15, 16]
    assert sample.reconstruct() == [10, 11, 12, 13, 14, 15, 16]
    assert qreform.masked_span_length(7) == 2


def test_information_gain_uniform():
    p = qreform.SpanPrediction()
    p.span = [5]
    p.distributions = [[1.0 / 1000] * 1000]
    assert abs(qreform.information_gain(p) + math.log(1000)) < 1e-9


def test_bm25_and_mrr():
    docs = [qreform.Document("a", "sort a list in python"), qreform.Document("b", "reverse an array in java")]
    index = qreform.Bm25Index.build(docs)
    assert index.search("java")[0][0] == "b"
    assert qreform.mrr([1.0, 0.5, 0.25]) == pytest.approx(0.5833333333)
    cases = [qreform.EvalCase("reverse array", "b")]
    assert qreform.evaluate(index, cases) == 1.0


def test_train_and_expand(tmp_path):
    queries, docs, cases = qreform.make_intent_benchmark(101)
    vocab = qreform.Vocabulary.build(queries, min_freq=1)
    config = qreform.ModelConfig()
    config.embed_dim, config.layers, config.heads, config.feedforward_dim = 16, 1, 2, 32
    model = qreform.InfillModel(config, len(vocab))
    train = qreform.TrainConfig()
    train.epochs = 2
    losses = model.train_cqc([vocab.encode(qreform.tokenize(q)) for q in queries], train)
    assert len(losses) == 2

    path = tmp_path / "model.ckpt"
    model.save(path, vocab.hash)
    loaded = qreform.InfillModel.load(path, vocab.hash)
    assert loaded.parameter_count == model.parameter_count

    expander = qreform.Expander(vocab, loaded, k=3)
    out = expander.expand("how to sort a dataframe")
    assert len(out) <= 3
    assert all(isinstance(c.reformulated, str) for c in out)
    assert all(out[i].ig >= out[i + 1].ig for i in range(len(out) - 1))

    index = qreform.Bm25Index.build(docs)
    value = qreform.evaluate(index, cases[:20], expander)
    assert 0.0 <= value <= 1.0
