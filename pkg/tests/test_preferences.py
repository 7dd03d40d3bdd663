import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mechlearn import AuctionSpec
from mechlearn.autodiff import ShapeError, Tape, Tensor
from mechlearn.preferences import (
    LabeledAllocationSet,
    PreferenceFunction,
    ProbitNoiseModel,
    allocation_similarity,
    allocations_from_csv,
    build_labels,
    class_balance,
    flip_probabilities,
    labeled_from_csv,
    labeled_to_csv,
    pairwise_label,
    pca,
    preference_score,
    preference_score_tensor,
    preference_scores,
    probit_flip,
    reference_threshold,
    uniform_allocations,
)
from mechlearn.seeding import stream

import oracles


TVF = PreferenceFunction("tvf")
ENTROPY = PreferenceFunction("entropy")
QUOTA = PreferenceFunction("quota")


# -- construction ------------------------------------------------------------

def test_function_validation():
    with pytest.raises(ValueError):
        PreferenceFunction("lexicographic")
    with pytest.raises(ValueError):
        PreferenceFunction("tvf", d=-0.5)
    with pytest.raises(ValueError):
        PreferenceFunction("quota", t=1.5)
    with pytest.raises(ValueError):
        PreferenceFunction("mixture")
    with pytest.raises(ValueError):
        PreferenceFunction("mixture", components=((0.5, TVF), (0.4, ENTROPY)))
    with pytest.raises(ValueError):
        PreferenceFunction("entropy", components=((1.0, TVF),))
    nested = PreferenceFunction("mixture", components=((1.0, TVF),))
    with pytest.raises(ValueError):
        PreferenceFunction("mixture", components=((1.0, nested),))


def test_quota_default_threshold():
    assert QUOTA.quota_threshold(2) == pytest.approx(0.4)
    assert PreferenceFunction("quota", t=0.3).quota_threshold(2) == 0.3


def test_labels_are_descriptive():
    assert TVF.label() == "tvf(d=0)"
    assert ENTROPY.label() == "entropy"
    mix = PreferenceFunction("mixture", components=((0.5, TVF), (0.5, QUOTA)))
    assert "tvf" in mix.label() and "quota" in mix.label()


# -- scores ------------------------------------------------------------------

def test_tvf_examples():
    assert preference_score(TVF, [[0.5, 0.5], [0.5, 0.5]]) == 0.0
    assert preference_score(TVF, [[1.0, 0.0], [0.0, 1.0]]) == pytest.approx(-2.0)
    relaxed = PreferenceFunction("tvf", d=2.0)
    assert preference_score(relaxed, [[1.0, 0.0], [0.0, 1.0]]) == 0.0


def test_entropy_examples():
    assert preference_score(ENTROPY, [[0.5, 0.5], [0.5, 0.5]]) == pytest.approx(2 * math.log(2))
    assert preference_score(ENTROPY, [[1.0, 0.0], [1.0, 0.0]]) == 0.0
    assert preference_score(ENTROPY, [[0.0, 0.0], [0.5, 0.5]]) == pytest.approx(math.log(2))


def test_quota_examples():
    fn = PreferenceFunction("quota", t=0.4)
    assert preference_score(fn, [[0.5], [0.5]]) == pytest.approx(0.1)
    # an empty item counts as even shares
    assert preference_score(fn, [[0.0, 0.5], [0.0, 0.5]]) == pytest.approx(0.1)
    lopsided = preference_score(fn, [[0.9], [0.1]])
    assert lopsided == pytest.approx(0.1 - 0.4)


def test_score_shape_and_mixture_guards():
    with pytest.raises(ShapeError):
        preference_score(TVF, np.zeros((2, 2, 2)))
    mix = PreferenceFunction("mixture", components=((1.0, TVF),))
    with pytest.raises(ValueError):
        preference_score(mix, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        preference_scores(mix, np.zeros((4, 2, 2)))


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=50, deadline=None)
def test_tvf_never_positive_and_zero_iff_constant_rows(seed):
    rng = np.random.default_rng(seed)
    z = rng.uniform(size=(8, 3, 4))
    scores = preference_scores(TVF, z)
    assert (scores <= 0).all()
    flat = np.repeat(rng.uniform(size=(8, 3, 1)), 4, axis=2)
    np.testing.assert_array_equal(preference_scores(TVF, flat), 0.0)
    # shifting a whole row leaves item-pair differences alone
    shifted = z + rng.uniform(size=(8, 3, 1))
    np.testing.assert_allclose(preference_scores(TVF, shifted), scores, atol=1e-9)


def test_entropy_bounds_and_maximality(rng):
    z = rng.uniform(size=(10_000, 2, 2))
    scores = preference_scores(ENTROPY, z)
    top = 2 * math.log(2)
    assert (scores >= 0).all()
    assert (scores <= top + 1e-12).all()
    uniform_score = preference_score(ENTROPY, np.full((2, 2), 0.25))
    assert uniform_score == pytest.approx(top)
    assert scores.max() <= uniform_score + 1e-12


@given(c=st.floats(0.01, 100.0, allow_nan=False))
@settings(max_examples=50, deadline=None)
def test_quota_scale_invariance(c):
    rng = np.random.default_rng(7)
    z = rng.uniform(0.05, 1.0, size=(6, 3, 2))
    base = preference_scores(QUOTA, z)
    scaled = preference_scores(QUOTA, c * z)
    np.testing.assert_allclose(scaled, base, atol=1e-12)


def test_scores_match_loop_oracles(rng):
    z = rng.uniform(size=(200, 3, 3))
    for fn, kind, kw in (
        (PreferenceFunction("tvf", d=0.3), "tvf", {"d": 0.3}),
        (ENTROPY, "entropy", {}),
        (PreferenceFunction("quota", t=0.2), "quota", {"t": 0.2}),
    ):
        got = preference_scores(fn, z)
        want = oracles.loop_scores(kind, z, **kw)
        if kind == "entropy":
            # numpy sums pairwise, the python loop sequentially: last-ulp noise
            np.testing.assert_allclose(got, want, rtol=3e-15, atol=1e-14, err_msg=kind)
        else:
            np.testing.assert_array_equal(got, want, err_msg=kind)


def test_tensor_scores_match_and_differentiate(rng):
    z_np = rng.uniform(0.05, 0.95, size=(5, 2, 3))
    for fn in (TVF, ENTROPY, PreferenceFunction("quota", t=0.25)):
        z = Tensor(z_np.copy(), requires_grad=True)
        with Tape() as tape:
            scores = preference_score_tensor(fn, z)
            loss = reduce_sum(scores)
        if fn.kind == "entropy":
            np.testing.assert_allclose(scores.data, preference_scores(fn, z_np), atol=1e-9)
        else:
            np.testing.assert_allclose(scores.data, preference_scores(fn, z_np), atol=1e-7)
        tape.backward(loss)
        assert z.grad is not None

        def f(flat):
            scores = preference_score_tensor(fn, Tensor(flat.reshape(z_np.shape)))
            return float(scores.data.sum())

        fd = oracles.fd_gradient(f, z_np.copy().reshape(-1)).reshape(z_np.shape)
        assert oracles.rel_error(z.grad, fd) < 1e-4, fn.kind


def reduce_sum(t):
    import mechlearn.autodiff as ad

    return ad.tsum(t)


# -- plurality labeling -------------------------------------------------------

def test_pairwise_label_examples():
    assert pairwise_label(5.0, [1.0, 2.0, 9.0]) == 1
    assert pairwise_label(1.0, [2.0, 3.0, 4.0]) == 0
    assert pairwise_label(5.0, [5.0, 5.0, 5.0]) == 0
    assert pairwise_label(2.0, [1.0]) == 1
    with pytest.raises(ValueError):
        pairwise_label(1.0, [])


@given(seed=st.integers(0, 2**31 - 1), bump=st.floats(0.0, 10.0, allow_nan=False))
@settings(max_examples=60, deadline=None)
def test_pairwise_label_monotone_in_score(seed, bump):
    rng = np.random.default_rng(seed)
    comps = rng.normal(size=11)
    s = float(rng.normal())
    assert pairwise_label(s + bump, comps) >= pairwise_label(s, comps)


def test_build_labels_deterministic(rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 100, rng)
    a = build_labels(pool, TVF, 11, stream(3, "labels"))
    b = build_labels(pool, TVF, 11, stream(3, "labels"))
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.scores, b.scores)


def test_build_labels_matches_loop_oracle(rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 300, rng)
    got = build_labels(pool, TVF, 11, stream(17, "labels"))
    want = oracles.loop_plurality_labels(
        oracles.loop_scores("tvf", pool), 11, stream(17, "labels")
    )
    np.testing.assert_array_equal(got.labels, want)


def test_build_labels_identical_pool_all_negative(spec_2x2, rng):
    pool = np.repeat(uniform_allocations(spec_2x2, 1, rng), 40, axis=0)
    labeled = build_labels(pool, TVF, 11, rng)
    assert labeled.labels.sum() == 0


def test_build_labels_dominant_allocation_always_positive(rng):
    # one allocation with strictly even rows dominates every tvf score
    pool = np.abs(np.random.default_rng(5).normal(size=(30, 2, 2))) + 0.01
    pool[:, :, 1] = pool[:, :, 0] + 0.5  # uneven: strictly negative scores
    pool[7] = 0.3  # perfectly even rows, score 0
    labeled = build_labels(pool, TVF, 11, rng)
    assert labeled.labels[7] == 1


def test_build_labels_pool_too_small(rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 11, rng)
    with pytest.raises(ValueError, match="pool"):
        build_labels(pool, TVF, 11, rng)


def test_build_labels_mixture_partitions(rng, spec_2x2):
    mix = PreferenceFunction("mixture", components=((0.5, TVF), (0.5, ENTROPY)))
    pool = uniform_allocations(spec_2x2, 200, rng)
    labeled = build_labels(pool, mix, 11, stream(23, "labels"))
    np.testing.assert_array_equal(labeled.scores[:100], preference_scores(TVF, pool[:100]))
    np.testing.assert_array_equal(labeled.scores[100:], preference_scores(ENTROPY, pool[100:]))
    assert labeled.provenance == mix.label()


def test_positive_fraction_near_half_on_uniform_pool(rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 4000, rng)
    labeled = build_labels(pool, TVF, 11, stream(29, "labels"))
    assert labeled.positive_fraction() == pytest.approx(0.5, abs=0.03)


# -- PCA -----------------------------------------------------------------------

def test_reference_threshold_fixed_and_cached(spec_2x2):
    a = reference_threshold(TVF, spec_2x2)
    b = reference_threshold(TVF, spec_2x2)
    assert a == b
    pool = uniform_allocations(spec_2x2, 10_000, np.random.default_rng(714025))
    assert a == float(np.median(preference_scores(TVF, pool)))


def test_pca_known_mode_matches_loop_oracle(rng, spec_2x2):
    z = uniform_allocations(spec_2x2, 1000, rng)
    pool = uniform_allocations(spec_2x2, 10_000, np.random.default_rng(714025))
    for fn, kind, kw in ((TVF, "tvf", {}), (ENTROPY, "entropy", {}), (QUOTA, "quota", {"t": 0.4})):
        got = pca(z, fn, spec_2x2)
        want = oracles.loop_pca_known(z, kind, pool, **kw)
        assert got == want, kind


def test_pca_trivial_cases(spec_2x2):
    even = np.full((50, 2, 2), 0.25)
    assert pca(even, TVF, spec_2x2) == 1.0
    threshold_override = pca(even, TVF, spec_2x2, threshold=-10.0)
    assert threshold_override == 1.0
    assert pca(even, TVF, spec_2x2, threshold=1e-9) == 0.0


def test_pca_nearest_neighbor_self_reference(rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 64, rng)
    labeled = build_labels(pool, TVF, 11, rng)
    assert pca(pool, labeled) == labeled.positive_fraction()


def test_pca_nearest_neighbor_matches_loop_oracle(rng, spec_2x2):
    ref = uniform_allocations(spec_2x2, 100, rng)
    labels = (np.random.default_rng(4).uniform(size=100) < 0.5).astype(int)
    labeled = LabeledAllocationSet(ref, np.zeros(100), labels)
    z = uniform_allocations(spec_2x2, 1000, rng)
    assert pca(z, labeled) == oracles.loop_pca_nn(z, ref, labels)


def test_pca_rejects_garbage(spec_2x2):
    with pytest.raises(ShapeError):
        pca(np.zeros((0, 2, 2)), TVF, spec_2x2)
    with pytest.raises(TypeError):
        pca(np.zeros((3, 2, 2)), "tvf", spec_2x2)


# -- probit noise ---------------------------------------------------------------

def test_flip_probability_at_boundary():
    model = ProbitNoiseModel(mu=0.7, sigma=1.0, k=1.05, f=0.15, normalize=False)
    q = flip_probabilities(np.array([0.7]), model)
    assert q[0] == pytest.approx(0.525)


def test_flip_probability_floor_far_from_boundary():
    model = ProbitNoiseModel(mu=0.0, sigma=0.1, k=1.05, f=0.15, normalize=False)
    q = flip_probabilities(np.array([100.0]), model)
    assert q[0] == pytest.approx(0.15)


def test_zero_noise_is_identity(rng):
    labels = rng.integers(0, 2, size=50)
    scores = rng.uniform(size=50)
    model = ProbitNoiseModel(mu=0.7, sigma=1.0, k=0.0, f=0.0)
    np.testing.assert_array_equal(probit_flip(labels, scores, model, rng), labels)


def test_floor_one_inverts_everything(rng):
    labels = rng.integers(0, 2, size=50)
    scores = rng.uniform(size=50)
    model = ProbitNoiseModel(mu=0.7, sigma=1.0, k=0.0, f=1.0)
    np.testing.assert_array_equal(probit_flip(labels, scores, model, rng), 1 - labels)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        ProbitNoiseModel(f=1.5)
    with pytest.raises(ValueError):
        ProbitNoiseModel(k=-1.0)
    with pytest.raises(ValueError):
        ProbitNoiseModel(sigma=0.0)


def test_default_noise_flips_over_a_quarter(rng, spec_2x2):
    """Default probit parameters perturb >25% of plurality labels."""
    pool = uniform_allocations(spec_2x2, 5000, rng)
    labeled = build_labels(pool, TVF, 11, stream(31, "labels"))
    model = ProbitNoiseModel()
    flipped = probit_flip(labeled.labels, labeled.scores, model, stream(31, "noise"))
    fraction = float((flipped != labeled.labels).mean())
    assert fraction > 0.25 - 0.03
    q = flip_probabilities(labeled.scores, model)
    assert (q >= 0.15).all() and (q <= 1.0).all()
    assert q.mean() > 0.25


def test_flip_probabilities_respect_normalize_flag(rng):
    scores = rng.uniform(0.5, 0.9, size=1000)
    shifted = 3.0 * scores + 10.0
    model = ProbitNoiseModel()
    np.testing.assert_allclose(
        flip_probabilities(shifted, model), flip_probabilities(scores, model), atol=1e-9
    )
    raw_model = ProbitNoiseModel(normalize=False, sigma=1.0)
    near = flip_probabilities(scores, raw_model)
    far = flip_probabilities(scores + 5.0, raw_model)
    assert near.mean() - far.mean() > 0.3  # near mu flips a lot, far is floored


# -- similarity, balancing, CSV ---------------------------------------------------

def test_allocation_similarity_examples(rng):
    a = rng.uniform(size=(20, 2, 2))
    assert allocation_similarity(a, a) == 0.0
    zeros = np.zeros((5, 2, 2))
    ones = np.ones((5, 2, 2))
    assert allocation_similarity(zeros, ones) == pytest.approx(2.0)
    b = rng.uniform(size=(20, 2, 2))
    assert allocation_similarity(a, b) == allocation_similarity(b, a)
    with pytest.raises(ShapeError):
        allocation_similarity(a, b[:3])


def test_class_balance_90_10(rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 100, rng)
    labels = np.zeros(100, dtype=int)
    labels[:10] = 1
    labeled = LabeledAllocationSet(pool, np.arange(100.0), labels)
    balanced = class_balance(labeled, stream(5, "balance"))
    assert len(balanced) == 180
    assert int(balanced.labels.sum()) == 90
    np.testing.assert_array_equal(balanced.labels[:100], labels)
    # duplicates are exact copies of minority originals
    for idx in range(100, 180):
        assert balanced.labels[idx] == 1
        matches = (pool[:10] == balanced.allocations[idx]).all(axis=(1, 2))
        assert matches.any()


def test_class_balance_matches_loop_oracle(rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 60, rng)
    labels = (np.arange(60) % 4 == 0).astype(int)  # 15 positive
    labeled = LabeledAllocationSet(pool, np.arange(60.0), labels)
    got = class_balance(labeled, stream(9, "balance"))
    allocs, scores, labs = oracles.loop_balance(pool, np.arange(60.0), labels, stream(9, "balance"))
    np.testing.assert_array_equal(got.allocations, allocs)
    np.testing.assert_array_equal(got.scores, scores)
    np.testing.assert_array_equal(got.labels, labs)


def test_class_balance_noop_when_even(rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 10, rng)
    labels = np.array([0, 1] * 5)
    labeled = LabeledAllocationSet(pool, np.zeros(10), labels)
    balanced = class_balance(labeled, rng)
    np.testing.assert_array_equal(balanced.allocations, pool)
    np.testing.assert_array_equal(balanced.labels, labels)


def test_class_balance_rejects_single_class(rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 10, rng)
    labeled = LabeledAllocationSet(pool, np.zeros(10), np.zeros(10, dtype=int))
    with pytest.raises(ValueError, match="both classes"):
        class_balance(labeled, rng)


def test_labeled_csv_round_trip(tmp_path, rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 25, rng)
    labeled = build_labels(pool, TVF, 11, rng)
    ap, lp = tmp_path / "alloc.csv", tmp_path / "labels.csv"
    labeled_to_csv(labeled, ap, lp)
    back = labeled_from_csv(ap, lp)
    np.testing.assert_array_equal(back.allocations, labeled.allocations)
    np.testing.assert_array_equal(back.scores, labeled.scores)
    np.testing.assert_array_equal(back.labels, labeled.labels)


def test_labeled_csv_diagnostics(tmp_path):
    ap = tmp_path / "alloc.csv"
    lp = tmp_path / "labels.csv"
    ap.write_text("sample,agent,item,z\n0,0,0,1.0\n0,0,1,x\n")
    with pytest.raises(ValueError, match=":3"):
        allocations_from_csv(ap)
    ap.write_text("sample,agent,item,z\n0,0,0,1.0\n")
    lp.write_text("sample,score\n")
    with pytest.raises(ValueError, match="expected header"):
        labeled_from_csv(ap, lp)
    lp.write_text("sample,score,label\n")
    with pytest.raises(ValueError, match="missing labels"):
        labeled_from_csv(ap, lp)


def test_labeled_set_validation(rng, spec_2x2):
    pool = uniform_allocations(spec_2x2, 4, rng)
    with pytest.raises(ValueError):
        LabeledAllocationSet(pool, np.zeros(4), np.array([0, 1, 2, 0]))
    with pytest.raises(ShapeError):
        LabeledAllocationSet(pool, np.zeros(3), np.zeros(4, dtype=int))
