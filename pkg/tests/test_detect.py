import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onlinecpd.core import TimeSeries, embed, mini_batch
from onlinecpd.datagen import SyntheticSpec, generate
from onlinecpd.detect import (DetectorConfig, OnlineONNC, OnlineONNR, ScoreBuffer, ScoreSeries,
                              default_min_distance, default_threshold, extract_peaks, onnc_dissimilarity,
                              onnc_loss, onnc_loss_grad, onnr_loss, onnr_loss_grad, onnr_score,
                              replay_running_mean, run_onnc, run_onnr, shift_offline,
                              update_running_mean)
from onlinecpd.nn import NeuralNet

from conftest import finite_difference, max_rel_error

REF, TEST = np.array([[0.0]]), np.array([[1.0]])


def logit(p):
    return np.log(p / (1 - p))


def two_point_net(head, out_ref, out_test):
    """Affine net whose output is ``out_ref`` at x=0 and ``out_test`` at x=1."""
    net = NeuralNet(1, (), head=head)
    inv = logit if head == "sigmoid" else np.sqrt
    b = inv(out_ref)
    net.params[:] = [inv(out_test) - b, b]
    return net


# ---------------------------------------------------------------- classifier loss and score


def test_onnc_loss_uniform_half():
    net = two_point_net("sigmoid", 0.5, 0.5)
    ref, test = np.zeros((5, 1)), np.ones((5, 1))
    assert onnc_loss(ref, test, net) == pytest.approx(2 * np.log(2), abs=1e-12)
    assert onnc_dissimilarity(ref, test, net) == pytest.approx(0.0, abs=1e-12)


def test_onnc_loss_two_points():
    net = two_point_net("sigmoid", 0.1, 0.9)
    assert onnc_loss(REF, TEST, net) == pytest.approx(-2 * np.log(0.9), abs=1e-12)


def test_onnc_loss_separation_limit():
    net = two_point_net("sigmoid", 1e-9, 1 - 1e-9)
    assert 0 < onnc_loss(REF, TEST, net) < 1e-5


def test_onnc_dissimilarity_two_points():
    net = two_point_net("sigmoid", 0.25, 0.75)
    assert onnc_dissimilarity(REF, TEST, net) == pytest.approx(2 * np.log(3), abs=1e-12)


def test_onnc_dissimilarity_invariant_under_swap_and_flip():
    rng = np.random.default_rng(3)
    ref, test = rng.normal(size=(6, 2)), rng.normal(size=(6, 2)) + 1
    net = NeuralNet(2, (4,), seed=1)
    flipped = net.copy()
    # negating the last layer maps f to 1 - f
    flipped.weights[-1][...] *= -1
    flipped.biases[-1][...] *= -1
    assert onnc_dissimilarity(test, ref, flipped) == pytest.approx(onnc_dissimilarity(ref, test, net), rel=1e-12)


def test_onnc_loss_clamped():
    net = two_point_net("sigmoid", 0.5, 0.5)
    net.params[:] = [-1000.0, 0.0]  # f(test) underflows to 0
    assert np.isfinite(onnc_loss(REF, TEST, net))
    assert onnc_loss(REF, TEST, net) == pytest.approx(np.log(2) - np.log(1e-6), rel=1e-6)


def test_onnc_requires_sigmoid_head():
    with pytest.raises(ValueError, match="classification head required"):
        onnc_loss(REF, TEST, NeuralNet(1, (), head="square"))


def test_onnc_accepts_mini_batches():
    emb = embed(TimeSeries(np.arange(30.0)[:, None]), 2)
    net = NeuralNet(2, (3,), seed=0)
    ref, test = mini_batch(emb, 15, 5), mini_batch(emb, 25, 5)
    assert onnc_loss(ref, test, net) == onnc_loss(ref.data, test.data, net)


# ---------------------------------------------------------------- ratio loss and score


def test_onnr_loss_zero_output():
    net = NeuralNet(1, (), head="square")
    net.params[:] = 0
    assert onnr_loss(np.zeros((3, 1)), np.ones((3, 1)), net) == 0.0


def test_onnr_loss_two_points():
    net = two_point_net("square", 2.0, 1.0)
    assert onnr_loss(REF, TEST, net, alpha=0.1) == pytest.approx(0.85, abs=1e-12)


def test_onnr_loss_unit_ratio():
    net = two_point_net("square", 1.0, 1.0)
    assert onnr_loss(np.zeros((4, 1)), np.ones((4, 1)), net, alpha=0.1) == pytest.approx(-0.5, abs=1e-12)


def one_hot_net(values, head="square"):
    net = NeuralNet(len(values), (), head=head)
    net.weights[0][:, 0] = np.sqrt(values)
    return net, np.eye(len(values))


def test_onnr_score_examples():
    net, X = one_hot_net([1.5, 0.5, 1.0, 3.0])
    assert onnr_score(X, net) == pytest.approx(0.5, abs=1e-12)
    net, X = one_hot_net([1.0, 1.0])
    assert onnr_score(X, net) == pytest.approx(0.0, abs=1e-12)
    net, X = one_hot_net([0.0, 0.0])
    assert onnr_score(X, net) == -1.0


def test_onnr_requires_ratio_head():
    with pytest.raises(ValueError, match="ratio head required"):
        onnr_score(TEST, NeuralNet(1, (), head="sigmoid"))


@pytest.mark.parametrize("head", ["square", "softplus"])
def test_onnr_unit_ratio_gives_zero_score(head):
    # both networks constant at one: every raw score is zero
    cfg = DetectorConfig(n=2, l=4, ratio_head=head)
    det = OnlineONNR(1, cfg)
    for net in (det.g1, det.g2):
        net.params[:] = 0
        net.biases[-1][...] = 1.0 if head == "square" else np.log(np.e - 1)
    rng = np.random.default_rng(0)
    d, _ = det.process(rng.normal(size=(2, 1)), rng.normal(size=(2, 1)))
    assert d == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------- gradients


def random_pair(rng, dim, n):
    return rng.normal(size=(n, dim)), rng.normal(size=(n, dim)) + 0.5


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.integers(1, 8), width=st.integers(1, 8))
def test_onnc_gradient_matches_finite_differences(seed, dim, width):
    rng = np.random.default_rng(seed)
    ref, test = random_pair(rng, dim, 3)
    net = NeuralNet(dim, (width,), head="sigmoid", seed=seed)
    _, grad = onnc_loss_grad(ref, test, net)
    numeric = finite_difference(lambda: onnc_loss(ref, test, net), net.params)
    assert max_rel_error(grad, numeric) < 1e-4


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.integers(1, 8), width=st.integers(1, 8),
       head=st.sampled_from(["square", "softplus"]))
def test_onnr_gradient_matches_finite_differences(seed, dim, width, head):
    rng = np.random.default_rng(seed)
    ref, test = random_pair(rng, dim, 3)
    net = NeuralNet(dim, (width,), head=head, seed=seed)
    _, grad = onnr_loss_grad(ref, test, net, alpha=0.1)
    numeric = finite_difference(lambda: onnr_loss(ref, test, net, alpha=0.1), net.params)
    assert max_rel_error(grad, numeric) < 1e-4


# ---------------------------------------------------------------- running mean and shift


def test_running_mean_hand_unrolled():
    np.testing.assert_allclose(replay_running_mean([1, 1, 1, 1, 1], l=2, n=1), [0.5, 1.0, 1.5, 1.5, 1.5])


def test_running_mean_zero_fixed_point():
    assert not replay_running_mean(np.zeros(50), l=20, n=5).any()


@pytest.mark.parametrize("l,n", [(2, 1), (100, 1), (100, 10), (20, 20)])
def test_running_mean_steady_state(l, n):
    # l/n + 1 equal terms, each divided by l
    d0 = 0.7
    out = replay_running_mean(np.full(3 * (l // n) + 5, d0), l, n)
    assert out[-1] == pytest.approx(d0 * (l // n + 1) / l, rel=1e-12)


def test_running_mean_matches_window_sum():
    rng = np.random.default_rng(2)
    raw = rng.normal(size=60)
    l, n = 20, 4
    out = replay_running_mean(raw, l, n)
    w = l // n + 1
    for j in range(raw.size):
        assert out[j] == pytest.approx(raw[max(0, j - w + 1):j + 1].sum() / l, abs=1e-12)


def test_update_running_mean_checks_geometry():
    buf = ScoreBuffer(10, 2)
    assert len(buf) == 6
    assert update_running_mean(buf, 1.0, 10, 2) == 0.1
    with pytest.raises(ValueError):
        update_running_mean(buf, 1.0, 20, 2)


def test_score_buffer_requires_divisible_lag():
    with pytest.raises(ValueError, match="n must divide l"):
        ScoreBuffer(10, 3)


def test_shift_example():
    times = np.arange(500, 1500, 10)
    vals = np.exp(-0.5 * ((times - 930) / 30.0) ** 2)
    score = ScoreSeries(times, vals, vals, l=100, n=10)
    shifted = shift_offline(score)
    assert shifted.times[np.argmax(shifted.smoothed)] == 820
    np.testing.assert_array_equal(shifted.smoothed, score.smoothed)
    np.testing.assert_array_equal(shifted.online_times, score.times)
    with pytest.raises(ValueError, match="already shifted"):
        shift_offline(shifted)


def test_shift_zero_series():
    z = np.zeros(5)
    assert not shift_offline(ScoreSeries(np.arange(5), z, z, l=2, n=1)).smoothed.any()


# ---------------------------------------------------------------- peaks


def grid_score(values, start=1, step=1, l=100):
    values = np.asarray(values, dtype=float)
    times = np.arange(start, start + step * values.size, step)
    return ScoreSeries(times, values, values, l=l, n=step, shifted=True)


def bump(t, centre, height, width=20.0):
    return height * np.exp(-0.5 * ((t - centre) / width) ** 2)


def test_peaks_all_zero():
    assert extract_peaks(grid_score(np.zeros(1000)), 0.1, 100).size == 0


def test_peaks_two_bumps():
    t = np.arange(1, 1001)
    v = bump(t, 400, 1.0) + bump(t, 800, 0.8)
    np.testing.assert_array_equal(extract_peaks(grid_score(v), 0.5, 100), [400, 800])


def test_peaks_suppression_window():
    v = np.zeros(1000)
    v[399], v[449] = 1.0, 0.9
    np.testing.assert_array_equal(extract_peaks(grid_score(v), 0.5, 100), [400])


def test_peaks_tie_goes_to_earlier():
    v = np.zeros(100)
    v[29] = v[59] = 1.0
    np.testing.assert_array_equal(extract_peaks(grid_score(v), 0.5, 40), [30])


def test_peaks_reject_bad_distance():
    with pytest.raises(ValueError):
        extract_peaks(grid_score(np.zeros(5)), 0.1, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=200), st.floats(-1, 3), st.integers(1, 30))
def test_peaks_invariants(values, threshold, min_distance):
    score = grid_score(values)
    peaks = extract_peaks(score, threshold, min_distance)
    v = np.pad(np.asarray(values), 1, constant_values=-np.inf)
    assert np.all(np.diff(peaks) > min_distance)
    for p in peaks:
        assert v[p] >= threshold
        assert v[p] >= v[p - 1] and v[p] >= v[p + 1]
    # every qualifying local maximum is covered by a peak at least as high
    for t in range(1, v.size - 1):
        if v[t] >= threshold and v[t] >= v[t - 1] and v[t] >= v[t + 1]:
            near = peaks[np.abs(peaks - t) <= min_distance]
            assert near.size and v[near].max() >= v[t]


def test_default_threshold_ignores_peaks():
    rng = np.random.default_rng(0)
    noise = rng.normal(scale=0.01, size=1000)
    spiky = noise.copy()
    spiky[::100] += 5.0
    assert default_threshold(spiky) == pytest.approx(default_threshold(noise), rel=0.05)
    assert default_threshold(np.zeros(10)) > 0
    assert default_threshold(np.array([])) == np.inf


def test_default_min_distance():
    assert default_min_distance(100) == 150
    assert default_min_distance(1) == 2


# ---------------------------------------------------------------- config


@pytest.mark.parametrize("kw", [dict(n=0), dict(n=3, l=10), dict(l=5, n=10), dict(k=0), dict(n_epochs=0),
                                dict(alpha=1.0), dict(lr=0.0), dict(scale="x"), dict(ratio_head="sigmoid")])
def test_config_rejects(kw):
    with pytest.raises(ValueError, match="invalid detector config"):
        DetectorConfig(**kw)


def test_config_warmup():
    assert DetectorConfig(k=2, n=10, l=100).warmup == 112
    assert DetectorConfig(n=10, l=100).shift == 110


# ---------------------------------------------------------------- full runs


def small_cfg(**kw):
    base = dict(n=5, l=20, n_epochs=2, lr=0.05, hidden=(8,))
    base.update(kw)
    return DetectorConfig(**base)


@pytest.fixture(scope="module")
def jump_series():
    series, ann = generate(SyntheticSpec("mean_jumps", segment_length=200, num_segments=4, seed=3))
    return series, ann


def test_run_too_short():
    with pytest.raises(ValueError, match="series shorter than warm-up horizon"):
        run_onnc(TimeSeries(np.zeros((25, 1))), small_cfg())


@pytest.mark.parametrize("run", [run_onnc, run_onnr])
def test_run_grid_and_replay(run, jump_series):
    series, _ = jump_series
    cfg = small_cfg()
    res = run(series, cfg)
    online = res.score.online_times
    assert online[0] == cfg.warmup
    assert np.all(np.diff(online) == cfg.n)
    assert online[-1] <= series.T < online[-1] + cfg.n
    np.testing.assert_array_equal(res.score.times, online - cfg.l - cfg.n)
    np.testing.assert_array_equal(replay_running_mean(res.score.raw, cfg.l, cfg.n), res.score.smoothed)
    assert np.all(np.isfinite(res.score.raw))


@pytest.mark.parametrize("run", [run_onnc, run_onnr])
def test_run_deterministic(run, jump_series):
    series, _ = jump_series
    a, b = run(series, small_cfg(seed=4)), run(series, small_cfg(seed=4))
    np.testing.assert_array_equal(a.score.raw, b.score.raw)
    np.testing.assert_array_equal(a.detected_cps, b.detected_cps)
    c = run(series, small_cfg(seed=5))
    assert not np.array_equal(a.score.raw, c.score.raw)


@pytest.mark.parametrize("run", [run_onnc, run_onnr])
def test_run_start_index_offsets_times(run, jump_series):
    series, _ = jump_series
    moved = TimeSeries(series.values, start_index=101)
    a, b = run(series, small_cfg()), run(moved, small_cfg())
    np.testing.assert_array_equal(a.score.raw, b.score.raw)
    np.testing.assert_array_equal(a.score.times + 100, b.score.times)


def test_onnc_scores_before_training():
    cfg = small_cfg(n=2, l=4)
    det = OnlineONNC(1, cfg)
    probe = det.net.copy()
    rng = np.random.default_rng(0)
    ref, test = rng.normal(size=(2, 1)), rng.normal(size=(2, 1)) + 3
    d, dbar = det.process(ref, test)
    assert d == onnc_dissimilarity(ref, test, probe)
    assert dbar == d / cfg.l
    assert det.net.step == cfg.n_epochs


def test_onnr_symmetry_replay(jump_series):
    series, _ = jump_series
    cfg = small_cfg()
    X = embed(series, 1).to_array()
    a, b = OnlineONNR(1, cfg, seeds=(11, 22)), OnlineONNR(1, cfg, seeds=(22, 11))
    for t in range(cfg.l + cfg.n, X.shape[0], cfg.n):
        ref, test = X[t - cfg.l - cfg.n:t - cfg.l], X[t - cfg.n:t]
        assert a.process(ref, test) == b.process(test, ref)


def test_state_size_independent_of_length():
    cfg = DetectorConfig(n=10, l=100, hidden=(32,))
    onnc, onnr = OnlineONNC(3, cfg), OnlineONNR(3, cfg)
    assert len(onnc.buffer) == cfg.l // cfg.n + 1
    assert onnc.state_size() == onnc.net.state_size() + 11 + 1
    assert onnr.state_size() == onnr.g1.state_size() + onnr.g2.state_size() + 11 + 1


def test_constant_series_has_no_detections():
    res = run_onnc(TimeSeries(np.zeros((400, 1))), small_cfg())
    assert np.max(np.abs(res.score.smoothed)) < 1e-9
    assert res.detected_cps.size == 0


def test_mean_jumps_peaks_near_changes(jump_series):
    series, ann = jump_series
    res = run_onnc(series, DetectorConfig(n=10, l=100, n_epochs=10, lr=0.1, seed=1))
    for tau in ann.true_cps:
        window = (res.score.times > tau - 50) & (res.score.times < tau + 50)
        assert res.score.smoothed[window].max() > res.threshold
