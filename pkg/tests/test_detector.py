import json
from dataclasses import replace

import numpy as np
import pytest

from covcpd.covtensor import CurvePanel
from covcpd.detector import DetectorConfig, binary_segment, detect_and_test
from covcpd.errors import ArgumentError, SegmentTooShortError
from covcpd.fbasis import BasisSpec
from covcpd.longrun import LongRunSpec
from covcpd.simlab import builtin_setting, generate_panel, generate_regimes, null_setting

FAST = DetectorConfig(mc_reps=1000, grid_r=200)


@pytest.fixture(scope="module")
def s1():
    return builtin_setting(1)


def test_config_validation():
    with pytest.raises(ArgumentError):
        DetectorConfig(alpha=0.0)
    with pytest.raises(ArgumentError):
        DetectorConfig(max_depth=0)
    with pytest.raises(ArgumentError):
        DetectorConfig(min_segment=17).check_basis(8)
    DetectorConfig(min_segment=18).check_basis(8)


def test_identical_curves_do_not_reject():
    panel = CurvePanel(np.tile(np.arange(1.0, 9.0), (40, 1)), BasisSpec(8, 2))
    res = detect_and_test(panel, FAST)
    assert res.t_max == 0.0 and not res.reject and res.p == 1.0


def test_too_short():
    panel = CurvePanel(np.ones((20, 8)), BasisSpec(8, 2))
    with pytest.raises(SegmentTooShortError):
        detect_and_test(panel, FAST)


def test_strong_break_detected(s1):
    res = detect_and_test(generate_panel(s1, 1), FAST)
    assert res.reject and abs(res.theta_hat - 0.5) < 0.01
    assert res.bandwidth == 7  # ceil(300 ** (1/3))
    assert res.spectrum.D_kept >= 1


def test_decision_consistency(s1):
    for seed in range(6):
        setting = s1.with_(sigma_sq_noise=9.0) if seed % 2 else null_setting(s1)
        res = detect_and_test(generate_panel(setting, seed), FAST)
        assert res.reject == (res.t_max > res.crit)
        # with the add-one p-value the two rules can only disagree when exactly
        # alpha*M samples reach t_max; none of these panels sits on that boundary
        assert (res.p <= res.alpha) == res.reject


@pytest.mark.parametrize("c", [0.1, 10.0])
def test_scale_invariance(s1, c):
    panel = generate_panel(s1.with_(sigma_sq_noise=6.0), 4)
    a = detect_and_test(panel, FAST)
    b = detect_and_test(CurvePanel(panel.coeffs * c, panel.basis), FAST)
    assert (a.reject, a.k_hat, a.p) == (b.reject, b.k_hat, b.p)
    assert b.t_max == pytest.approx(a.t_max * c**4, rel=1e-10)


def test_preprocessing_flags_are_applied(s1):
    panel = generate_panel(s1, 2)
    cfg = replace(FAST, rescale=True)
    res = detect_and_test(panel, cfg)
    norms = np.linalg.norm(panel.coeffs, axis=1, keepdims=True)
    direct = detect_and_test(CurvePanel(panel.coeffs / norms, panel.basis), FAST)
    assert res.t_max == direct.t_max


def test_result_serialises(s1):
    res = detect_and_test(generate_panel(s1, 1), FAST)
    doc = json.loads(json.dumps(res.to_dict()))
    assert set(doc) >= {"t_max", "k_hat", "theta_hat", "crit", "p", "reject", "spectrum"}
    assert doc["t_max"] == res.t_max


def test_no_break_gives_single_root(s1):
    panel = generate_panel(null_setting(s1), 0)
    tree = binary_segment(panel, FAST)
    assert tree.change_points == []
    assert len(tree.nodes) == 1
    root = tree.nodes[0]
    assert root.result is not None and not root.result.reject
    assert root.stop_reason == "not significant"


def test_short_panel_root_is_too_short():
    tree = binary_segment(CurvePanel(np.ones((10, 8)), BasisSpec(8, 2)), FAST)
    assert tree.change_points == [] and tree.nodes[0].stop_reason == "too short"


def test_tree_invariants_and_reproducibility(s1):
    panel, truth = generate_regimes([s1.sigma1, s1.sigma2, s1.sigma1], [120, 120, 120], seed=3)
    tree = binary_segment(panel, FAST)
    pts = tree.change_points
    assert pts == sorted(set(pts))
    for node in tree.nodes:
        if node.split is not None:
            assert node.split - node.start >= FAST.min_segment
            assert node.stop - node.split >= FAST.min_segment
        else:
            assert node.stop_reason in {"not significant", "too short", "depth cap"}
            if node.result is not None and node.stop_reason == "not significant":
                assert not node.result.reject
    again = binary_segment(panel, FAST)
    assert json.dumps(tree.to_dict()) == json.dumps(again.to_dict())
    assert tree.to_dict()["multiplicity_correction"].startswith("none")
    # pre-order: every node starts after (or at) the previous one's start
    assert tree.nodes[0].start == 0 and tree.nodes[0].stop == panel.n


def test_depth_cap(s1):
    panel, _ = generate_regimes([s1.sigma1, s1.sigma2, s1.sigma1], [120, 120, 120], seed=3)
    tree = binary_segment(panel, replace(FAST, max_depth=1))
    assert len(tree.change_points) == 1
    assert [n.stop_reason for n in tree.nodes[1:]] == ["depth cap", "depth cap"]


@pytest.mark.slow
def test_setting1_detection_rate(s1):
    cfg = DetectorConfig(mc_reps=2000, longrun=LongRunSpec(iid_mode=True))
    setting = s1.with_(n_per_group=300)
    hits = 0
    for rep in range(500):
        res = detect_and_test(generate_panel(setting, np.random.SeedSequence(11, spawn_key=(rep,))), cfg)
        hits += res.reject and 0.497 < res.theta_hat < 0.503
    assert hits / 500 >= 0.90


@pytest.mark.slow
def test_two_break_segmentation(s1):
    cfg = DetectorConfig(mc_reps=2000)
    good, sound, checked = 0, 0, 0
    for rep in range(200):
        panel, truth = generate_regimes([s1.sigma1, s1.sigma2, s1.sigma1], [200, 200, 200],
                                        seed=np.random.SeedSequence(7, spawn_key=(rep,)))
        tree = binary_segment(panel, cfg)
        pts = tree.change_points
        good += len(pts) == 2 and all(abs(a - b) <= 0.02 * panel.n for a, b in zip(pts, truth))
        if rep < 40:
            # re-test every splitting segment with a fresh null seed
            for node in tree.nodes:
                if node.split is not None:
                    res = detect_and_test(panel.segment(node.start, node.stop), replace(cfg, seed=rep + 1))
                    sound += res.reject
                    checked += 1
    assert good / 200 >= 0.90
    assert sound / checked >= 0.95
