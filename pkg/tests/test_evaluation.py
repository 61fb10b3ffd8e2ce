import numpy as np
import pytest

from aagan import tensor as tn
from aagan.config import VARIANTS, ConfigError, TrainConfig, get_variant
from aagan.data import EARLIEST, LATEST, SplitSpec, SyntheticConfig, generate_synthetic_dataset, split_batch
from aagan.evaluation import (EMBED_COLUMNS, evaluate, export_embeddings, mean_centroid_distance, report_json,
                              run_ablation, setting_name, to_csv, untrained_bundle)
from aagan.heads import ClassifierParams, classifier_logits
from aagan.losses import classification_loss_from_logits
from aagan.model import build_context, classifier_input, context_final, predict
from aagan.training import new_optimizer, train_step

SPLIT = SplitSpec(0.25, 12)


@pytest.fixture(scope="module")
def tiny():
    return generate_synthetic_dataset(SyntheticConfig(num_classes=3, dim=4, train_per_class=4, test_per_class=3,
                                                      length=12, seed=9))


def cfg(**kw):
    return TrainConfig(**{**dict(epochs=1, batch_size=6, hidden_dim=4, attention_hidden=(3,), split=SPLIT), **kw})


def test_zero_logits_give_lowest_index_share(tiny):
    b = untrained_bundle(cfg(), tiny)
    b.params["cls.out.w"][:] = 0.0
    b.params["cls.out.b"][:] = 0.0
    rep = evaluate(b, tiny, SPLIT)
    labels = [r.label for r in tiny.subset("test")]
    assert rep.accuracy == labels.count(0) / len(labels)
    assert rep.per_class_accuracy == {0: 1.0, 1: 0.0, 2: 0.0}


def test_accuracy_matches_brute_force_recount(tiny):
    b = untrained_bundle(cfg(seed=4), tiny)
    rep = evaluate(b, tiny, SPLIT)
    correct = 0
    for r in tiny.subset("test"):
        one = split_batch([r], SPLIT)
        correct += int(predict(b, one.observed_v, one.observed_tp)[0] == r.label)
    assert rep.correct == correct and rep.total == 9
    assert rep.accuracy == correct / 9


def test_evaluation_is_pure(tiny):
    b = untrained_bundle(cfg(), tiny)
    snapshot = b.copy()
    r1, r2 = evaluate(b, tiny, SPLIT), evaluate(b, tiny, SPLIT)
    assert r1 == r2 and report_json(r1) == report_json(r2)
    assert b.equals(snapshot)


def test_setting_names():
    assert setting_name(EARLIEST) == "Earliest" and setting_name(LATEST) == "Latest"
    assert setting_name(SplitSpec(0.3)) == "custom"


def test_earliest_is_prefix_of_latest(tiny):
    e = split_batch(tiny.records, SplitSpec(0.2, 12))
    l = split_batch(tiny.records, SplitSpec(0.5, 12))
    T = e.observed_v.shape[1]
    assert np.array_equal(e.observed_v, l.observed_v[:, :T])
    assert np.array_equal(e.observed_tp, l.observed_tp[:, :T])


def test_variant_c_is_smaller(tiny):
    full = untrained_bundle(cfg(), tiny)
    c = untrained_bundle(cfg(variant="c"), tiny)
    assert c.num_parameters() < full.num_parameters()
    assert not any(g.startswith(("gen", "disc")) for g in c.groups())


def test_variant_o_drops_only_regulariser():
    o, full = cfg(variant="o"), cfg()
    assert o.effective_weights().w_r == 0.0
    ow, fw = o.effective_weights(), full.effective_weights()
    assert (ow.w_v, ow.w_tp, ow.w_c) == (fw.w_v, fw.w_tp, fw.w_c)
    vo, vf = get_variant("o"), get_variant("full")
    assert (vo.streams, vo.attention, vo.generators, vo.joint) == (vf.streams, vf.attention, vf.generators, vf.joint)


def test_unknown_variant():
    with pytest.raises(ConfigError):
        get_variant("p")


def test_variant_j_classifier_gradients_skip_encoders(tiny):
    c = cfg(variant="j")
    b = untrained_bundle(c, tiny)
    batch = split_batch(tiny.subset("train"), SPLIT)
    g = tn.Graph()
    P = g.params_from(b.params, set(b.params))
    ctx = build_context(P, b.arch, batch.observed_v, batch.observed_tp)
    x = g.constant(classifier_input(P, b.arch, ctx.context, 3).data)
    loss = tn.mean(classification_loss_from_logits(classifier_logits(x, ClassifierParams.take(P, "cls")),
                                                   batch.labels))
    grads = tn.backward(g, loss)
    for k in b.names_in(("enc_v", "enc_tp", "att", "gen_v", "gen_tp")):
        assert np.all(grads[k] == 0.0), k
    assert np.any(grads["cls.out.w"] != 0.0)


@pytest.mark.parametrize("variant", list(VARIANTS))
def test_variant_loss_contracts(tiny, variant):
    c = cfg(variant=variant)
    v = c.variant_spec
    b = untrained_bundle(c, tiny)
    batch = split_batch(tiny.subset("train"), SPLIT).take(np.arange(6))
    stage = "joint" if v.joint else "gan"
    *_, bd = train_step(batch, b, new_optimizer(c), new_optimizer(c), c, stage)
    gen = v.generators != "none"
    assert (bd.l_v != 0.0) == (gen and v.uses_visual)
    assert (bd.l_tp != 0.0) == (gen and v.uses_temporal)
    assert (bd.l_r != 0.0) == v.regularizer
    assert (bd.d_v != 0.0) == (v.adversarial and v.uses_visual)
    assert (bd.d_tp != 0.0) == (v.adversarial and v.uses_temporal)
    assert (bd.l_c != 0.0) == v.joint


def test_ablation_arity_and_median(tiny):
    base = cfg()
    res = run_ablation(tiny, base, ["a", "c"], [0, 1, 2])
    assert [r.variant for r in res] == ["a", "c"]
    for r in res:
        assert len(r.seed_accuracies) == 3
        assert r.median_accuracy == sorted(r.seed_accuracies)[1]
        assert r.report.accuracy == r.median_accuracy
    assert to_csv([r.as_row() for r in res]).count("\n") == 3


def test_export_embeddings(tiny):
    b = untrained_bundle(cfg(), tiny)
    rows = export_embeddings(b, b.copy(), tiny, 6, SPLIT)
    assert len(rows) == 6 and tuple(rows[0]) == EMBED_COLUMNS
    for r in rows:
        assert (r["x_before"], r["y_before"]) == (r["x_after"], r["y_after"])
    assert mean_centroid_distance(rows, "before") == mean_centroid_distance(rows, "after")
    with pytest.raises(ValueError):
        export_embeddings(b, b, tiny, 2, SPLIT)


def test_export_variance_matches_eigensolver(tiny):
    b = untrained_bundle(cfg(), tiny)
    rows = export_embeddings(b, b, tiny, 9, SPLIT)
    pts = np.array([[r["x_after"], r["y_after"]] for r in rows])
    recs = [r for r in tiny.subset("test") if r.id in {row["id"] for row in rows}]
    sb = split_batch(recs, SPLIT)
    C = context_final(b, sb.observed_v, sb.observed_tp)
    ev = np.linalg.eigh(np.cov(C, rowvar=False))[0][::-1][:2]
    np.testing.assert_allclose(pts.var(axis=0, ddof=1), ev, rtol=1e-6)


def test_csv_float_repr_round_trips():
    text = to_csv([{"a": 0.1 + 0.2, "b": 3}])
    assert text.splitlines()[1] == f"{0.1 + 0.2!r},3"
