import pytest
from hypothesis import given, settings, strategies as st

from safecompress.selection import EvalReport, score_report, select_best, tm_score, tm_score_multi
from safecompress.sparse import STRATEGIES

# Published (task, mia) pairs and their two-decimal TM-scores
PAPER_ROWS = [((69.52, 51.75, 1.0), 1.34), ((72.64, 67.33, 1.0), 1.08)]
LAMBDA_ROW = {0.8: 0.58, 0.9: 0.88, 1.0: 1.34, 1.1: 2.05, 1.2: 3.14}


@pytest.mark.parametrize("args,expected", PAPER_ROWS)
def test_published_scores(args, expected):
    assert tm_score(*args) == pytest.approx(expected, abs=0.005)


@pytest.mark.parametrize("lam,expected", sorted(LAMBDA_ROW.items()))
def test_lambda_sweep(lam, expected):
    assert tm_score(69.52, 51.75, lam) == pytest.approx(expected, abs=0.005)


def test_lambda_sweep_needs_percent_units():
    # in fractions the same row would read 0.80 / 1.22 / 1.34 / ..., not the published values
    frac = tm_score(0.6952, 0.5175, 0.8)
    assert abs(frac - LAMBDA_ROW[0.8]) > 0.1


def test_unit_invariance_only_at_lambda_one():
    a = tm_score(69.52, 51.75) / tm_score(72.64, 67.33)
    b = tm_score(0.6952, 0.5175) / tm_score(0.7264, 0.6733)
    assert a == pytest.approx(b, rel=1e-12)


def test_multi_blend_published():
    tb, tw = tm_score(68.13, 52.32), tm_score(68.13, 59.01)
    assert tb == pytest.approx(1.3022, abs=5e-5)
    assert tw == pytest.approx(1.1546, abs=5e-5)
    assert tm_score_multi(tb, tw, 0.5) == pytest.approx(1.23, abs=0.005)


def test_equal_accuracies():
    assert tm_score(61.0, 61.0) == 1.0


def test_blend_endpoints():
    assert tm_score_multi(1.3, 0.7, 1.0) == 1.3
    assert tm_score_multi(1.3, 0.7, 0.0) == 0.7
    with pytest.raises(ValueError):
        tm_score_multi(1.0, 1.0, 1.5)


def test_zero_mia_rejected():
    with pytest.raises(ZeroDivisionError):
        tm_score(50.0, 0.0)


def _reports(scores):
    return [EvalReport(i, s, 0.0, {"black_box": 50.0}, {}, sc) for i, (s, sc) in enumerate(zip(STRATEGIES, scores))]


def test_tie_break_by_strategy_order():
    assert select_best(_reports([1.1, 1.3, 0.9, 1.3])).candidate_id == 1
    # same scores presented in reverse order still pick magnitude+random
    rev = list(reversed(_reports([1.1, 1.3, 0.9, 1.3])))
    assert select_best(rev).strategy == STRATEGIES[1]


def test_single_candidate():
    r = _reports([0.4])
    assert select_best(r) is r[0]


def test_empty_rejected():
    with pytest.raises(ValueError):
        select_best([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from([0.5, 0.9, 1.0, 1.2, 1.7]), min_size=4, max_size=4), st.randoms())
def test_select_matches_linear_scan(scores, rnd):
    reports = _reports(scores)
    rnd.shuffle(reports)
    best_score = max(scores)
    expected = min(i for i, s in enumerate(scores) if s == best_score)
    assert select_best(reports).candidate_id == expected


def test_score_report_combined():
    r = score_report(0, STRATEGIES[0], 68.13, {"black_box": 52.32, "white_box": 59.01}, alpha=0.5)
    assert r.tm_score_combined == pytest.approx(0.5 * 68.13 / 52.32 + 0.5 * 68.13 / 59.01, rel=1e-12)
    single = score_report(0, STRATEGIES[0], 60.0, {"white_box": 50.0})
    assert single.tm_score_combined == pytest.approx(1.2)
    with pytest.raises(ValueError):
        score_report(0, None, 60.0, {"grey": 50.0})


def test_report_dict_round_trip():
    r = score_report(2, STRATEGIES[2], 61.25, {"black_box": 55.5}, sparsity=0.0997)
    back = EvalReport.from_dict(r.to_dict())
    assert back == r
    dense = score_report(-1, None, 61.25, {"black_box": 55.5})
    assert EvalReport.from_dict(dense.to_dict()).strategy is None
