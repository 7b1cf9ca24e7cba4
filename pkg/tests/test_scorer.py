from __future__ import annotations

import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from falcon.cti import CtiDocument, Ioc, IocKind
from falcon.llm import LlmConfig, LlmError, MockChatClient
from falcon.scorer import (
    ScorerCalibration,
    calibrate_threshold,
    diagonal_recall,
    f1_at_threshold,
    fit_sigmoid,
    score_pair,
    similarity_matrix,
    sweep_thresholds,
    validate_semantics,
)


def test_sigmoid_midpoint():
    cal = ScorerCalibration(slope=5.0, offset=0.0, decision_threshold=0.5)
    assert cal.scale(0.0) == 0.5


def test_sigmoid_hand_value():
    cal = ScorerCalibration(slope=5.0, offset=0.0, decision_threshold=0.5)
    assert abs(cal.scale(1.0) - 1.0 / (1.0 + math.exp(-5.0))) < 1e-12
    assert abs(cal.scale(1.0) - 0.9933071490757153) < 1e-9


def test_calibration_invariants():
    with pytest.raises(ValueError):
        ScorerCalibration(slope=0.0)
    with pytest.raises(ValueError):
        ScorerCalibration(decision_threshold=1.0)


def test_scaled_monotone_in_cosine():
    cal = ScorerCalibration()
    values = [cal.scale(x) for x in np.linspace(-1, 1, 41)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_score_pair_orders_related_above_unrelated(corehound_cti, corehound_final,
                                                   snort_http_rule, embedder):
    cal = ScorerCalibration()
    related = score_pair(corehound_cti, corehound_final, cal, embedder)
    unrelated = score_pair(corehound_cti, snort_http_rule, cal, embedder)
    assert related.raw_cosine > unrelated.raw_cosine
    assert related.scaled > unrelated.scaled


def test_similarity_matrix_shape_and_recomputation(embedder):
    ctis = [
        CtiDocument(id=f"c{i}", threat_name=f"Threat_{i}",
                    iocs=(Ioc(kind=IocKind.DOMAIN, value=f"host{i}.bad.example"),))
        for i in range(2)
    ]
    rules = [f'rule r{j} {{ strings: $a = "host{j}.bad.example" condition: $a }}'
             for j in range(3)]
    m = similarity_matrix(ctis, rules, embedder)
    assert m.shape == (2, 3)
    cal = ScorerCalibration()
    for i, cti in enumerate(ctis):
        for j, rule in enumerate(rules):
            pair = score_pair(cti, rule, cal, embedder)
            assert abs(m[i][j] - pair.raw_cosine) < 1e-9


def test_similarity_matrix_identical_lists_symmetric_unit_diagonal(embedder):
    texts = ["alpha beacon traffic", "bravo dropper payload", "charlie tunnel dns"]
    ctis = [
        CtiDocument(id=f"c{i}", threat_name=t,
                    behaviors=(f"observed {t} on the wire",))
        for i, t in enumerate(texts)
    ]
    from falcon.cti import cti_to_text
    rules = [cti_to_text(c) for c in ctis]
    m = similarity_matrix(ctis, rules, embedder)
    assert np.allclose(m, m.T, atol=1e-12)
    assert np.allclose(np.diag(m), 1.0, atol=1e-9)


def test_identity_matrix_recall():
    assert diagonal_recall(np.eye(4)) == 1.0


def test_diagonal_recall_hand_construction():
    m = np.array([
        [0.9, 0.1, 0.2],
        [0.3, 0.5, 0.8],  # off-diagonal wins this row
        [0.0, 0.1, 0.7],
    ])
    assert abs(diagonal_recall(m) - 2.0 / 3.0) < 1e-12


def test_all_equal_matrix_recall_zero():
    assert diagonal_recall(np.full((5, 5), 0.42)) == 0.0


def test_diagonal_recall_requires_square():
    with pytest.raises(ValueError):
        diagonal_recall(np.zeros((2, 3)))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_diagonal_recall_argmax_invariance(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n))
    base = diagonal_recall(m)
    # strictly increasing transforms preserve every row argmax
    assert diagonal_recall(np.exp(m)) == base
    assert diagonal_recall(3.0 * m + 11.0) == base
    assert diagonal_recall(np.tanh(m)) == base


def test_calibrate_separable():
    result = calibrate_threshold([0.9, 0.9], [0.1, 0.1])
    assert result.f1 == 1.0
    assert 0.1 < result.calibration.decision_threshold < 0.9


def test_calibrate_spec_worked_example():
    # positives {0.8, 0.4}, negatives {0.6}: threshold below 0.4 keeps both
    # positives (P=2/3, R=1, F1=0.8), beating the stricter alternative (2/3)
    result = calibrate_threshold([0.8, 0.4], [0.6])
    assert abs(result.f1 - 0.8) < 1e-12
    assert result.calibration.decision_threshold <= 0.4


def test_calibrate_single_pair_each():
    result = calibrate_threshold([0.7], [0.3])
    assert result.f1 == 1.0


def test_calibrate_empty_class_is_error():
    with pytest.raises(ValueError):
        calibrate_threshold([], [0.5])
    with pytest.raises(ValueError):
        calibrate_threshold([0.5], [])


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=12),
    st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), min_size=1, max_size=12),
)
def test_calibrate_beats_every_swept_threshold(pos, neg):
    result = calibrate_threshold(pos, neg)
    for t in sweep_thresholds(pos, neg):
        assert result.f1 >= f1_at_threshold(pos, neg, t) - 1e-12


def test_fit_sigmoid_separates_classes():
    rng = np.random.default_rng(0)
    pos = list(0.6 + 0.2 * rng.random(40))
    neg = list(0.0 + 0.3 * rng.random(40))
    a, b = fit_sigmoid(pos, neg)
    assert a > 0
    mid_pos = 1.0 / (1.0 + math.exp(-(a * 0.7 + b)))
    mid_neg = 1.0 / (1.0 + math.exp(-(a * 0.15 + b)))
    assert mid_pos > 0.5 > mid_neg


# -- semantic validation gate

def _fixture_calibration(threshold: float) -> ScorerCalibration:
    return ScorerCalibration(slope=5.0, offset=0.0, decision_threshold=threshold)


def test_validate_semantics_pass_and_fail(corehound_cti, corehound_final,
                                          snort_http_rule, embedder):
    # pick a threshold between the two fixture scores so the verdicts split
    cal0 = _fixture_calibration(0.5)
    related = score_pair(corehound_cti, corehound_final, cal0, embedder).scaled
    unrelated = score_pair(corehound_cti, snort_http_rule, cal0, embedder).scaled
    threshold = (related + unrelated) / 2.0
    cal = _fixture_calibration(threshold)
    good = validate_semantics(corehound_cti, corehound_final, cal, embedder)
    assert good.status and good.score == pytest.approx(related)
    bad = validate_semantics(corehound_cti, snort_http_rule, cal, embedder)
    assert not bad.status
    assert "below threshold" in bad.feedback


def test_boundary_score_passes(corehound_cti, corehound_final, embedder):
    cal0 = _fixture_calibration(0.5)
    exact = score_pair(corehound_cti, corehound_final, cal0, embedder).scaled
    cal = _fixture_calibration(exact)  # score == threshold exactly
    feedback = validate_semantics(corehound_cti, corehound_final, cal, embedder)
    assert feedback.status


def test_judge_critical_finding_fails_gate(corehound_cti, corehound_final, embedder):
    judge = MockChatClient([
        '{"findings": [{"critical": true, "text": "Instate PE checks like uint32(...) for binary integrity."}]}'
    ])
    cal = _fixture_calibration(0.05)
    feedback = validate_semantics(corehound_cti, corehound_final, cal, embedder,
                                  judge=judge, llm_config=LlmConfig())
    assert not feedback.status
    assert "1. [critical]" in feedback.feedback
    # the numeric score rides along in the judge prompt
    prompt_text = judge.requests[0][1]["content"]
    assert "Similarity score:" in prompt_text


def test_judge_noncritical_findings_keep_status(corehound_cti, corehound_final, embedder):
    judge = MockChatClient([
        '{"findings": [{"critical": false, "text": "Check for GUID in ASCII, case-insensitive format."}]}'
    ])
    cal = _fixture_calibration(0.05)
    feedback = validate_semantics(corehound_cti, corehound_final, cal, embedder,
                                  judge=judge, llm_config=LlmConfig())
    assert feedback.status
    assert feedback.feedback.startswith("1. Check for GUID")


def test_judge_failure_degrades_to_score_only(corehound_cti, corehound_final, embedder):
    class _DeadClient:
        def complete(self, messages, config):
            raise LlmError("endpoint unreachable")

    cal = _fixture_calibration(0.05)
    feedback = validate_semantics(corehound_cti, corehound_final, cal, embedder,
                                  judge=_DeadClient(), llm_config=LlmConfig())
    assert feedback.status  # score cleared the bar; judge failure is non-fatal
    assert "judge unavailable" in feedback.feedback


def test_deterministic_without_judge(corehound_cti, corehound_final, embedder):
    cal = _fixture_calibration(0.5)
    a = validate_semantics(corehound_cti, corehound_final, cal, embedder)
    b = validate_semantics(corehound_cti, corehound_final, cal, embedder)
    assert a == b
