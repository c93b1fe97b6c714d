import json
from collections import Counter
from math import comb

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from seqtag.config import ConfigError
from seqtag.study import (
    HyperparameterSpace, ResultsAppender, StudyRecord, betainc, binomial_sign_test, brown_forsythe,
    check_paired, compare, complete_groups, median_delta, paired_group, poly_fit, read_results,
    sample_config, win_fractions, write_comparison, write_results, write_violin_data,
)


def rec(g, option, score, task="t", epochs=5):
    return StudyRecord(g, option, g * 64, task, score, score, epochs, False, "{}")


def test_sample_config_reproducible_and_non_increasing():
    space = HyperparameterSpace()
    a = sample_config(space, np.random.default_rng(3))
    b = sample_config(space, np.random.default_rng(3))
    assert a == b
    rng = np.random.default_rng(0)
    for _ in range(200):
        u = sample_config(space, rng).units_per_layer
        assert all(y <= x for x, y in zip(u, u[1:]))


def test_sample_config_covers_every_candidate():
    space = HyperparameterSpace()
    rng = np.random.default_rng(1)
    n = 10_000
    configs = [sample_config(space, rng) for _ in range(n)]
    for knob in ("char_rep", "classifier", "optimizer", "batch_size", "layers", "dropout.kind",
                 "gradient_policy.tau", "tag_scheme"):
        counts = Counter(c.get(knob) for c in configs)
        values = space.candidates[knob]
        p = 1 / len(values)
        sd = np.sqrt(n * p * (1 - p))
        for v in values:
            assert abs(counts[v] - n * p) < 5 * sd, (knob, v)
    first_units = Counter(c.units_per_layer[0] for c in configs)
    assert set(first_units) == set(space.candidates["units"])


@pytest.mark.parametrize("vary", ["classifier", "dropout.kind", "units", "layers", "optimizer"])
def test_paired_groups_differ_only_in_knob(vary):
    space = HyperparameterSpace()
    for g in range(5):
        group = paired_group(space, vary, g, base_seed=7)
        check_paired([c for _, c in group], vary)
        assert [c.seed for _, c in group] == [7 + g * 64 + o for o in range(len(group))]
    assert paired_group(space, vary, 2, 7) == paired_group(space, vary, 2, 7)


def test_depth_groups_share_total_units():
    group = paired_group(HyperparameterSpace(), "layers", 0)
    totals = {sum(c.units_per_layer) for _, c in group}
    assert len(totals) == 1 and 60 <= totals.pop() <= 300


def test_unknown_knob():
    with pytest.raises(ConfigError):
        HyperparameterSpace().options("colour")
    with pytest.raises(ConfigError):
        HyperparameterSpace({"colour": ["red"]})


def test_win_fraction_examples():
    scores = {0: {"A": .9, "B": .8}, 1: {"A": .9, "B": .8}, 2: {"A": .7, "B": .8}}
    assert win_fractions(scores, ["A", "B"])["A"] == pytest.approx(2 / 3)
    ties = {g: {"A": .5, "B": .5} for g in range(4)}
    assert win_fractions(ties, ["A", "B"]) == {"A": 0.5, "B": 0.5}
    many = {g: ({"A": 1.0, "B": 0.0} if g < 219 else {"A": 0.0, "B": 1.0}) for g in range(230)}
    assert round(100 * win_fractions(many, ["A", "B"])["A"], 1) == 95.2


def test_median_delta_examples():
    scores = {0: {"A": .5, "B": .6}, 1: {"A": .6, "B": .6}, 2: {"A": .7, "B": .6}}
    d = median_delta(scores, "B", ["A", "B"])
    assert d["A"] == pytest.approx(0.0, abs=1e-15) and d["B"] == 0.0
    assert median_delta({0: {"A": .3, "B": .5}}, "B", ["A"])["A"] == pytest.approx(-0.2)


def test_incomplete_groups_are_dropped(caplog):
    records = [rec(0, "A", .5), rec(0, "B", .6), rec(1, "A", .5)]
    _, groups = complete_groups(records)
    assert list(groups) == [("t", 0)]
    assert "incomplete" in caplog.text


def exact_binomial(k, n):
    probs = [comb(n, i) / 2 ** n for i in range(n + 1)]
    return min(1.0, sum(p for p in probs if p <= probs[k] * (1 + 1e-12)))


def test_binomial_examples():
    assert binomial_sign_test(9, 10) == pytest.approx(2 * (10 + 1) / 2 ** 10, abs=1e-15)
    assert binomial_sign_test(5, 10) == 1.0
    assert binomial_sign_test(219, 230) < 1e-10
    assert binomial_sign_test(0, 0) == 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 60).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_binomial_matches_oracles(kn):
    k, n = kn
    p = binomial_sign_test(k, n)
    assert p == binomial_sign_test(n - k, n)
    if n:
        assert p == pytest.approx(exact_binomial(k, n), rel=1e-12)
        assert p == pytest.approx(scipy.stats.binomtest(k, n).pvalue, rel=1e-9)


def test_betainc_against_scipy():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b, x = rng.uniform(0.2, 40), rng.uniform(0.2, 40), rng.uniform()
        assert betainc(a, b, x) == pytest.approx(scipy.special.betainc(a, b, x), rel=1e-9, abs=1e-300)


def test_brown_forsythe_examples():
    same = brown_forsythe([1, 2, 3], [1, 2, 3])
    assert (same.statistic, same.p) == (0.0, 1.0)
    a, b = [0.1, 0.4, 0.5, 0.9], [0.3, 0.35, 0.36, 0.5, 0.2]
    assert brown_forsythe(a, b).statistic == brown_forsythe(b, a).statistic
    assert brown_forsythe([1, 1, 1, 1], [1, 1, 1, 1]).p == 1.0


def test_brown_forsythe_against_scipy():
    rng = np.random.default_rng(2)
    for _ in range(50):
        groups = [rng.normal(0, rng.uniform(0.5, 3), size=rng.integers(3, 15)) for _ in range(rng.integers(2, 5))]
        ours = brown_forsythe(*groups)
        ref = scipy.stats.levene(*groups, center="median")
        assert ours.statistic == pytest.approx(ref.statistic, rel=1e-10)
        assert ours.p == pytest.approx(ref.pvalue, rel=1e-6)


def test_poly_fit_planted():
    x = np.arange(25, 301, 25, dtype=float)
    y = -1e-4 * x ** 2 + 0.02 * x + 0.9
    fit = poly_fit(x, y)
    assert abs(fit.a + 1e-4) < 1e-10 and abs(fit.b - 0.02) < 1e-10 and abs(fit.c - 0.9) < 1e-10
    assert fit.x_opt == pytest.approx(100) and fit.in_range
    assert fit.gamma25 == pytest.approx(-0.0625)
    assert fit(fit.x_opt + 25) - fit(fit.x_opt) == pytest.approx(fit.gamma25)


def test_poly_fit_convex_and_out_of_range():
    x = np.array([1.0, 2, 3, 4])
    assert poly_fit(x, x ** 2).x_opt is None
    fit = poly_fit(x, -(x - 10) ** 2)
    assert fit.x_opt == pytest.approx(10) and not fit.in_range
    with pytest.raises(np.linalg.LinAlgError):
        poly_fit([1, 1, 2, 2], [0, 1, 2, 3])


def test_poly_fit_noisy_and_optimal():
    rng = np.random.default_rng(0)
    x = rng.uniform(25, 175, size=100)
    y = -1e-4 * (x - 100) ** 2 + 0.9 + rng.normal(0, 1e-3, size=100)
    fit = poly_fit(x, y)
    assert abs(fit.x_opt - 100) < 5
    for _ in range(100):
        a, b, c = fit.a + rng.normal(0, 1e-5), fit.b + rng.normal(0, 1e-3), fit.c + rng.normal(0, 1e-2)
        assert fit.residual <= np.sum((a * x ** 2 + b * x + c - y) ** 2) + 1e-15


def test_compare_known_winner():
    records = [r for g in range(12) for r in (rec(g, "crf", 0.9), rec(g, "softmax", 0.8))]
    (table,) = compare(records, "classifier")
    assert table.best == "crf" and table.row("crf").delta is None
    assert table.row("crf").marked and not table.row("softmax").marked
    assert table.row("softmax").delta == pytest.approx(-0.1)
    assert sum(r.win_fraction for r in table.rows) == pytest.approx(1.0)


def test_compare_all_ties():
    records = [r for g in range(5) for r in (rec(g, "a", 0.5), rec(g, "b", 0.5))]
    (table,) = compare(records, "x")
    assert [r.win_fraction for r in table.rows] == [0.5, 0.5]
    assert table.row("b" if table.best == "a" else "a").binom_p == 1.0
    assert not any(r.marked for r in table.rows)


def test_results_roundtrip(tmp_path):
    write_results(tmp_path / "empty.csv", [])
    assert (tmp_path / "empty.csv").read_text().count("\n") == 1
    assert read_results(tmp_path / "empty.csv") == []
    cfg = json.dumps({"a": "x,\"y\""}, sort_keys=True, separators=(",", ":"))
    records = [StudyRecord(0, "crf", 3, "ner", 0.1 + 0.2, 1 / 3, 7, True, cfg), rec(0, "softmax", 0.25)]
    write_results(tmp_path / "r.csv", records)
    assert read_results(tmp_path / "r.csv") == records


def test_appender_writes_whole_groups(tmp_path):
    app = ResultsAppender(tmp_path / "r.csv")
    app.append([rec(0, "a", .1), rec(0, "b", .2)])
    app.append([rec(1, "a", .1)])
    assert len(read_results(tmp_path / "r.csv")) == 3


def test_exports(tmp_path):
    records = [r for g in range(3) for r in (rec(g, "a", 0.6), rec(g, "b", 0.5))]
    write_comparison(tmp_path / "c.csv", compare(records, "x"))
    write_violin_data(tmp_path / "v.csv", records)
    assert (tmp_path / "c.csv").read_text(encoding="utf-8").splitlines()[0].startswith("task,option")
    assert len((tmp_path / "v.csv").read_text().splitlines()) == 7
    with pytest.raises(OSError):
        write_results(tmp_path / "missing" / "r.csv", records)


def test_record_score_range():
    with pytest.raises(ValueError):
        rec(0, "a", 1.5)
