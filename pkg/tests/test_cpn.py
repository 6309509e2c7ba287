import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tapkit.core import ActionnessCurveSet, Proposal, TemporalSegment, ValidationError
from tapkit.cpn import (
    TagConfig,
    coarse_proposals,
    find_basins,
    fuse_actionness,
    group_basins,
    merge_proposals,
    normalize_weights,
    watershed_tag,
)
from tapkit.evaluation import tiou_matrix
from tapkit.oracles import oracle_nms

S = TemporalSegment


def curves(point, pair=None, recurrent=None, fps=1.0):
    pair = point if pair is None else pair
    recurrent = point if recurrent is None else recurrent
    return ActionnessCurveSet("v", fps, point, pair, recurrent)


def random_curve(seed, T=60):
    rng = np.random.default_rng(seed)
    base = np.zeros(T)
    for _ in range(rng.integers(1, 4)):
        a = rng.integers(0, T - 5)
        base[a:a + rng.integers(3, 20)] = 0.8
    return np.clip(base + 0.2 * rng.standard_normal(T), 0, 1)


def test_fuse_equal_weights():
    c = curves([0.2], [0.4], [0.6])
    assert fuse_actionness(c, (1 / 3, 1 / 3, 1 / 3))[0] == pytest.approx(0.4)


def test_fuse_identity_weights():
    c = curves([0.2, 0.9], [0.4, 0.1], [0.6, 0.0])
    np.testing.assert_array_equal(fuse_actionness(c, (1, 0, 0)), c.point)
    np.testing.assert_array_equal(fuse_actionness(c, (1, 0, 0), mode="product"), c.point)


def test_fuse_rejects_unnormalized_weights():
    with pytest.raises(ValidationError):
        fuse_actionness(curves([0.2]), (0.5, 0.5, 0.1))
    with pytest.raises(ValidationError):
        fuse_actionness(curves([0.2]), (1.5, -0.5, 0.0))


def test_product_fusion_is_geometric_mean():
    c = curves([0.25], [1.0], [0.5])
    assert fuse_actionness(c, (0.5, 0.25, 0.25), mode="product")[0] == pytest.approx(0.25**0.5 * 0.5**0.25)


def test_watershed_hand_case():
    fused = [0, 0, 0.9, 0.9, 0.9, 0, 0, 0.8, 0.8, 0]
    assert find_basins(np.array(fused), 0.5) == [(2, 5), (7, 9)]
    assert sorted(group_basins([(2, 5), (7, 9)], 0.7)) == [(2, 5), (2, 9), (7, 9)]
    props = watershed_tag(fused, 1.0, TagConfig(thresholds=(0.5,), group_fraction=0.7))
    assert sorted(p.segment.as_list() for p in props) == [[2, 5], [2, 9], [7, 9]]
    scores = {tuple(p.segment.as_list()): p.score for p in props}
    assert scores[(2.0, 9.0)] == pytest.approx((0.9 * 3 + 0.8 * 2) / 7)


def test_grouping_stops_below_fraction():
    assert sorted(group_basins([(2, 5), (7, 9)], 0.75)) == [(2, 5), (7, 9)]


def test_all_zero_curve():
    assert watershed_tag(np.zeros(20), 1.0) == []


def test_all_ones_curve():
    props = watershed_tag(np.ones(12), 2.0, TagConfig(thresholds=(0.5,)))
    assert len(props) == 1
    assert props[0].segment == S(0, 6) and props[0].score == 1.0


def test_empty_curve_errors():
    with pytest.raises(ValidationError):
        watershed_tag(np.zeros(0), 1.0)


def test_merge_identical_keeps_higher():
    a, b = Proposal("v", S(0, 5), 0.9), Proposal("v", S(0, 5), 0.7)
    assert merge_proposals([b, a], 0.95) == [a]


def test_merge_disjoint_unchanged():
    props = [Proposal("v", S(0, 5), 0.9), Proposal("v", S(6, 9), 0.7)]
    assert merge_proposals(props, 0.95) == props


def test_merge_chain_matches_greedy_oracle():
    a = Proposal("v", S(0, 10), 0.5)
    b = Proposal("v", S(0.4, 10.4), 0.9)
    c = Proposal("v", S(0.8, 10.8), 0.7)
    assert tiou_matrix([a.segment, b.segment], [b.segment, c.segment]).diagonal().min() >= 0.9
    assert merge_proposals([a, b, c], 0.9) == oracle_nms([a, b, c], 0.9) == [b]


@given(st.integers(0, 10**6), st.sampled_from([1.0, 2.0, 25.0]))
def test_proposals_inside_video(seed, fps):
    c = curves(random_curve(seed), fps=fps)
    for p in coarse_proposals(c):
        assert 0 <= p.segment.start < p.segment.end <= c.duration
        assert 0 <= p.score <= 1


def _recall(props, gt, thr=0.5):
    if not props:
        return 0.0
    m = tiou_matrix(gt, [p.segment for p in props])
    return float(np.mean(m.max(axis=1) >= thr))


@given(st.integers(0, 10**6), st.floats(0.05, 0.95))
def test_adding_threshold_never_lowers_recall(seed, extra):
    fused = random_curve(seed)
    rng = np.random.default_rng(seed)
    gt = [S(a, a + rng.integers(2, 15)) for a in rng.integers(0, 40, size=3)]
    base = (0.3, 0.6, 0.9)
    more = tuple(sorted(set(base) | {round(extra, 3)}))
    r0 = _recall(watershed_tag(fused, 1.0, TagConfig(thresholds=base)), gt)
    r1 = _recall(watershed_tag(fused, 1.0, TagConfig(thresholds=more)), gt)
    assert r1 >= r0


@given(st.integers(0, 10**6), st.sampled_from([0.25, 0.5, 2.0, 8.0]))
def test_channel_weight_scaling_invariance(seed, c):
    rng = np.random.default_rng(seed)
    cs = curves(random_curve(seed), random_curve(seed + 1), random_curve(seed + 2))
    w = rng.random(3) + 0.05
    # powers of two keep the renormalized weights bit-identical
    a = coarse_proposals(cs, TagConfig(channel_weights=normalize_weights(w)))
    b = coarse_proposals(cs, TagConfig(channel_weights=normalize_weights(c * w)))
    assert a == b


def test_config_validation():
    with pytest.raises(ValidationError):
        TagConfig(thresholds=(0.5, 0.3))
    with pytest.raises(ValidationError):
        TagConfig(group_fraction=0)
    with pytest.raises(ValidationError):
        TagConfig(fusion="max")
