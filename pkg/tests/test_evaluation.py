import math

import numpy as np
import pytest

from aspectgate.corpus import make_aspect_groups, parse_semeval_xml
from aspectgate.evaluation import (EvalCell, EvalReport, evaluate, render_report,
                                   report_from_dict, report_to_dict, summarize_runs)
from aspectgate.model import ModelParams
from aspectgate.training import TrainConfig, train

from helpers import make_record, semeval_path


def constant_predictor(vocab_rows, dim=6, predicted_class=0):
    """A model that always predicts one class, for controlled counting."""
    params = ModelParams.create(vocab_rows=vocab_rows, embed_size=dim,
                                hidden_size=3, fusion="none", seed=0)
    params.clf_w.values[...] = 0.0
    params.clf_b.values[...] = 0.0
    params.clf_b.values[predicted_class] = 10.0
    return params


def small_vocab(records):
    vocab = {}
    for record in records:
        for tok in record.tokens:
            vocab.setdefault(tok, len(vocab) + 1)
    return vocab


def test_all_correct_scores_one():
    records = [
        make_record("the pasta was lovely .", [("pasta", "neutral")]),
        make_record("the desk and the chair matched .",
                    [("desk", "neutral"), ("chair", "neutral")]),
    ]
    groups = make_aspect_groups(records)
    vocab = small_vocab(records)
    params = constant_predictor(len(vocab) + 1, predicted_class=0)  # always neutral
    report = evaluate(params, "gru", groups, vocab)
    assert report.total.acc == 1.0
    assert report.sa.acc == 1.0 and report.ma.acc == 1.0
    assert report.classes["neutral"].acc == 1.0


def test_hand_counted_breakdown():
    # 2 SA instances (1 correct), 2 MA instances (both correct) under an
    # always-neutral predictor
    records = [
        make_record("the pasta was lovely .", [("pasta", "neutral")]),
        make_record("the fish was bland .", [("fish", "negative")]),
        make_record("the desk and the chair matched .",
                    [("desk", "neutral"), ("chair", "neutral")]),
    ]
    groups = make_aspect_groups(records)
    vocab = small_vocab(records)
    params = constant_predictor(len(vocab) + 1, predicted_class=0)
    report = evaluate(params, "gru", groups, vocab)
    assert report.total.acc == 0.75
    assert report.sa.acc == 0.5
    assert report.ma.acc == 1.0
    # per-class: recall against the gold class
    assert report.classes["neutral"].acc == 1.0
    assert report.classes["negative"].acc == 0.0
    assert report.classes["positive"].acc is None


def test_identities_and_order_independence(toy_groups, toy_table):
    config = TrainConfig(variant="miad", hidden_size=6, max_epochs=2,
                         dev_fraction=0.0, seed=5)
    result = train(config, toy_groups, toy_table)
    report = evaluate(result.params, config.forward_variant, toy_groups,
                      toy_table.vocabulary)
    total = report.total
    assert total.acc == (report.sa.correct + report.ma.correct) / (
        report.sa.count + report.ma.count)
    weighted = sum(c.count * c.acc for c in report.classes.values() if c.count)
    assert math.isclose(weighted / total.count, total.acc, rel_tol=1e-12)
    assert sum(c.count for c in report.classes.values()) == total.count

    rng = np.random.RandomState(0)
    shuffled = [toy_groups[i] for i in rng.permutation(len(toy_groups))]
    again = evaluate(result.params, config.forward_variant, shuffled,
                     toy_table.vocabulary)
    assert report_to_dict(again) == report_to_dict(report)


def test_restaurant_gold_denominators():
    path = semeval_path("restaurant", "test")
    if path is None:
        pytest.skip("no SemEval-2014 restaurant test file; set SEMEVAL_DATA_DIR")
    records = parse_semeval_xml(path).records
    golds = [a.polarity for r in records for a in r.aspects]
    assert golds.count("positive") == 728
    assert golds.count("negative") == 196
    assert golds.count("neutral") == 196


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def test_percentages_render_with_one_decimal():
    report = EvalReport(domain="laptop", variant="miad")
    report.sa = EvalCell(correct=753, count=1000)
    text, csv = render_report([report])
    row = text.splitlines()[1]
    assert "75.3" in row
    assert row.count("-") >= 1  # empty buckets are absent, not zero
    csv_row = csv.splitlines()[1]
    assert csv_row.startswith("laptop,miad,75.3,75.3,,")


def test_empty_report_list_renders_header_only():
    text, csv = render_report([])
    assert len(text.splitlines()) == 1
    assert csv.splitlines() == [
        "domain,variant,total,sa,ma,neu,neg,pos,n_total,n_sa,n_ma,n_neu,n_neg,n_pos"]


def test_report_dict_round_trip():
    report = EvalReport(domain="restaurant", variant="gru_fl", seed=3)
    report.sa = EvalCell(4, 5)
    report.ma = EvalCell(2, 9)
    report.classes["positive"] = EvalCell(6, 10)
    clone = report_from_dict(report_to_dict(report))
    assert report_to_dict(clone) == report_to_dict(report)
    assert clone.total.count == 14


def test_summarize_runs_averages_accuracies():
    runs = []
    for seed, sa_correct in ((0, 8), (1, 6)):
        report = EvalReport(domain="restaurant", variant="miad", seed=seed)
        report.sa = EvalCell(sa_correct, 10)
        report.ma = EvalCell(5, 10)
        for label in report.classes:
            report.classes[label] = EvalCell(1, 2)
        runs.append(report)
    (mean,) = summarize_runs(runs)
    assert math.isclose(mean.sa.acc, 0.7, rel_tol=1e-12)
    assert math.isclose(mean.ma.acc, 0.5, rel_tol=1e-12)
    assert math.isclose(mean.total.acc, 0.6, rel_tol=1e-12)
