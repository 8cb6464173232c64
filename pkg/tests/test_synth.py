import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcside.linalg import SamplingPattern
from mcside.synth import (
    Dataset,
    GmmNoise,
    SubspaceModel,
    add_measurement_noise,
    add_model_noise,
    generate_ground_truth,
    load_bundle,
    measurement_noise,
    sample_pattern,
    save_bundle,
    snr_db,
)


def test_subspace_model_validation():
    with pytest.raises(ValueError):
        SubspaceModel(2, 2, 4, (5,))
    with pytest.raises(ValueError):
        SubspaceModel(1, 5, 4, (5,))
    m = SubspaceModel.even(5, 2, 10, 64)
    assert m.counts == (12, 13, 13, 13, 13) and m.n == 64


@pytest.mark.parametrize("S,d,r,m,target", [(3, 4, 12, 20, 12), (3, 5, 15, 20, 15), (10, 2, 20, 20, 20), (2, 2, 4, 20, 4)])
def test_ground_truth_rank(S, d, r, m, target):
    n = 60
    model = SubspaceModel.even(S, d, r, n)
    gt = generate_ground_truth(model, m, 11)
    assert gt.M.shape == (m, n)
    assert np.linalg.matrix_rank(gt.M) == target
    for s, Q in enumerate(gt.bases):
        rows = gt.B[gt.labels == s]
        assert np.linalg.norm(rows - rows @ Q @ Q.T) <= 1e-10 * np.linalg.norm(rows)


def test_scenario3_block_sizes():
    model = SubspaceModel(6, 2, 12, (9, 9, 9, 10, 13, 14))
    gt = generate_ground_truth(model, 20, 0)
    assert model.n == 64
    assert np.bincount(gt.labels).tolist() == [9, 9, 9, 10, 13, 14]


@given(st.integers(0, 10_000), st.floats(-10, 60))
def test_model_noise_hits_snr_exactly(seed, snr):
    B = np.random.default_rng(seed).standard_normal((30, 4))
    Bn = add_model_noise(B, snr, seed + 1)
    assert abs(snr_db(B, Bn - B) - snr) <= 1e-9


def test_infinite_snr_is_exact_copy(rng):
    B = rng.standard_normal((5, 2))
    Bn = add_model_noise(B, np.inf, 0)
    assert np.array_equal(B, Bn) and Bn is not B


def test_pattern_density_and_edges():
    assert not sample_pattern(4, 4, 0.0, 1).mask.any()
    assert sample_pattern(4, 4, 1.0, 1).mask.all()
    with pytest.raises(ValueError):
        sample_pattern(2, 2, 1.5, 0)
    pat = sample_pattern(100, 100, 0.3, 5)
    assert abs(pat.observed_count - 3000) <= 3 * np.sqrt(1e4 * 0.3 * 0.7)


def test_gmm_mean_and_validation(rng):
    g = GmmNoise()
    assert g.mean == pytest.approx(0.3 * 0.1 + 0.7 * -0.2)
    assert abs(g.sample(200_000, rng).mean() - g.mean) <= 5 * np.sqrt(0.3 + 0.01) / np.sqrt(200_000) * 3
    with pytest.raises(ValueError):
        GmmNoise(weights=(0.5, 0.6))
    with pytest.raises(ValueError):
        GmmNoise(variances=(1.0, 0.0))


@given(st.integers(0, 10_000), st.floats(-5, 30))
def test_measurement_snr_exact(seed, target):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((20, 30))
    pat = SamplingPattern(rng.random((20, 30)) < 0.5)
    noise, factor = measurement_noise(M, pat, GmmNoise(), target, seed)
    assert factor > 0
    assert not noise[~pat.mask].any()
    obs = np.where(pat.mask, M, 0.0)
    assert abs(snr_db(obs, noise) - target) <= 1e-9
    noisy = add_measurement_noise(M, pat, GmmNoise(), target, seed)
    np.testing.assert_array_equal(noisy, obs + noise)


def test_no_corrupted_entries_gives_zero_noise(rng):
    M = rng.standard_normal((4, 4))
    noise, factor = measurement_noise(M, SamplingPattern.full((4, 4)), GmmNoise(probability=0.0), 8.0, 0)
    assert factor == 0.0 and not noise.any()


def _mean_factor(p, reference):
    rng = np.random.default_rng(99)
    M = rng.standard_normal((20, 60))
    out = []
    for t in range(200):
        pat = sample_pattern(20, 60, p, [t, 1])
        ref = float(np.vdot(M, M)) if reference == "full" else None
        out.append(measurement_noise(M, pat, GmmNoise(), 8.0, [t, 2], ref)[1])
    return np.mean(out), np.std(out) / np.sqrt(len(out))


def test_full_reference_scale_shrinks_with_p():
    lo, _ = _mean_factor(0.25, "full")
    hi, _ = _mean_factor(0.9, "full")
    assert hi < lo


def test_observed_reference_scale_is_p_invariant():
    (lo, se_lo), (hi, se_hi) = _mean_factor(0.25, "observed"), _mean_factor(0.9, "observed")
    assert abs(lo - hi) <= 4 * np.hypot(se_lo, se_hi)


def test_bundle_round_trip(tmp_path):
    model = SubspaceModel(2, 2, 4, (3, 4))
    gt = generate_ground_truth(model, 5, 1)
    pat = sample_pattern(5, 7, 0.5, 2)
    data = Dataset(gt, add_model_noise(gt.B, 20, 3), add_model_noise(gt.A, 10, 4), pat,
                   np.where(pat.mask, gt.M, 0.0), {"seed": 1})
    save_bundle(tmp_path, data)
    back = load_bundle(tmp_path)
    np.testing.assert_array_equal(back.M, gt.M)
    np.testing.assert_array_equal(back.Bprime, data.Bprime)
    np.testing.assert_array_equal(back.truth.labels, gt.labels)
    assert back.pattern == pat and back.manifest == {"seed": 1}
