"""Online neural-network change-point detectors.

Two detectors share one loop: at every step ``t`` on an ``n``-spaced grid
they compare the reference mini-batch ``X(t-l)`` with the test mini-batch
``X(t)`` using a network trained online on exactly that pair.

* ONNC trains a classifier ``f`` (reference = 0, test = 1) with
  cross-entropy and scores the pair by the symmetrised log-odds average,
  an estimate of the KL divergence.
* ONNR trains two density-ratio regressors ``g1`` and ``g2`` with the
  relative least-squares (RuLSIF) objective in both directions and sums
  their Pearson chi-square scores.

Raw scores ``d(t)`` are smoothed by the running-mean recurrence

    dbar(t) = dbar(t - n) + (d(t) - d(t - l - n)) / l

which only needs the last ``l/n + 1`` raw scores.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import EmbeddedSeries, MiniBatch, TimeSeries, as_series, embed
from .nn import NeuralNet

CLAMP = 1e-6
SCALES = ("running", "none")
RATIO_HEADS = ("square", "softplus")


@dataclass(frozen=True)
class DetectorConfig:
    """Hyperparameters shared by both detectors.

    ``n`` must divide ``l`` so that ``d(t - l - n)`` falls on the step grid.
    """

    k: int = 1
    n: int = 10
    l: int = 100
    n_epochs: int = 10
    lr: float = 0.01
    alpha: float = 0.1
    hidden: tuple[int, ...] = (32,)
    activation: str = "tanh"
    scale: str = "running"
    ratio_head: str = "square"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        problems = self.violations()
        if problems:
            raise ValueError("invalid detector config: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.k < 1:
            out.append(f"k must be >= 1 (got {self.k})")
        if self.n < 1:
            out.append(f"n must be >= 1 (got {self.n})")
        if self.l < self.n:
            out.append(f"l must be >= n (got l={self.l}, n={self.n})")
        elif self.n >= 1 and self.l % self.n != 0:
            out.append(f"n must divide l (got l={self.l}, n={self.n})")
        if self.n_epochs < 1:
            out.append(f"n_epochs must be >= 1 (got {self.n_epochs})")
        if not self.lr > 0:
            out.append(f"lr must be > 0 (got {self.lr})")
        if not 0 < self.alpha < 1:
            out.append(f"alpha must be in (0, 1) (got {self.alpha})")
        if self.ratio_head not in RATIO_HEADS:
            out.append(f"ratio_head must be one of {RATIO_HEADS} (got {self.ratio_head!r})")
        if self.scale not in SCALES:
            out.append(f"scale must be one of {SCALES} (got {self.scale!r})")
        return out

    @property
    def warmup(self) -> int:
        """Offset of the first scored step from the series start: t0 = k + n + l."""
        return self.k + self.n + self.l

    @property
    def shift(self) -> int:
        return self.l + self.n


def _as_array(batch) -> np.ndarray:
    return batch.data if isinstance(batch, MiniBatch) else np.atleast_2d(np.asarray(batch, dtype=float))


def _require_head(net: NeuralNet, head: str):
    if head == "sigmoid" and net.head != "sigmoid":
        raise ValueError("classification head required")
    if head == "ratio" and net.head not in RATIO_HEADS:
        raise ValueError("ratio head required")


# ---------------------------------------------------------------- ONNC pieces


def _onnc_from_output(f: np.ndarray, n_ref: int) -> tuple[float, float]:
    fc = np.clip(f, CLAMP, 1.0 - CLAMP)
    log_f, log_1mf = np.log(fc), np.log1p(-fc)
    loss = -log_1mf[:n_ref].mean() - log_f[n_ref:].mean()
    dis = (log_1mf[:n_ref] - log_f[:n_ref]).mean() + (log_f[n_ref:] - log_1mf[n_ref:]).mean()
    return float(loss), float(dis)


def _onnc_logit_grad(f: np.ndarray, n_ref: int) -> np.ndarray:
    # d/dz of -log(1 - sigmoid(z)) is sigmoid(z); of -log(sigmoid(z)) is sigmoid(z) - 1
    g = f.copy()
    g[:n_ref] /= n_ref
    g[n_ref:] = (g[n_ref:] - 1.0) / (f.size - n_ref)
    return g


def onnc_loss(ref_batch, test_batch, net: NeuralNet) -> float:
    """Cross-entropy with the reference batch as class 0 and the test batch as class 1."""
    _require_head(net, "sigmoid")
    ref, test = _as_array(ref_batch), _as_array(test_batch)
    f = net.forward(np.vstack([ref, test]))
    return _onnc_from_output(f, len(ref))[0]


def onnc_dissimilarity(ref_batch, test_batch, net: NeuralNet) -> float:
    """KL-style score: mean log((1-f)/f) over reference plus mean log(f/(1-f)) over test."""
    _require_head(net, "sigmoid")
    ref, test = _as_array(ref_batch), _as_array(test_batch)
    f = net.forward(np.vstack([ref, test]))
    return _onnc_from_output(f, len(ref))[1]


def onnc_loss_grad(ref_batch, test_batch, net: NeuralNet) -> tuple[float, np.ndarray]:
    _require_head(net, "sigmoid")
    ref, test = _as_array(ref_batch), _as_array(test_batch)
    f = net.forward(np.vstack([ref, test]))
    loss = _onnc_from_output(f, len(ref))[0]
    return loss, net.backward(grad_logit=_onnc_logit_grad(f, len(ref))).copy()


# ---------------------------------------------------------------- ONNR pieces


def _onnr_loss_from_output(g: np.ndarray, n_ref: int, alpha: float) -> float:
    g_ref, g_test = g[:n_ref], g[n_ref:]
    return float((1 - alpha) / 2 * np.mean(g_ref ** 2)
                 + alpha / 2 * np.mean(g_test ** 2) - np.mean(g_test))


def _onnr_output_grad(g: np.ndarray, n_ref: int, alpha: float) -> np.ndarray:
    n_test = g.size - n_ref
    out = np.empty_like(g)
    out[:n_ref] = (1 - alpha) * g[:n_ref] / n_ref
    out[n_ref:] = (alpha * g[n_ref:] - 1.0) / n_test
    return out


def onnr_loss(ref_batch, test_batch, net: NeuralNet, alpha: float = 0.1) -> float:
    """Relative least-squares density-ratio loss for g ~ p_test / p_ref."""
    _require_head(net, "ratio")
    ref, test = _as_array(ref_batch), _as_array(test_batch)
    g = net.forward(np.vstack([ref, test]))
    return _onnr_loss_from_output(g, len(ref), alpha)


def onnr_loss_grad(ref_batch, test_batch, net: NeuralNet, alpha: float = 0.1) -> tuple[float, np.ndarray]:
    _require_head(net, "ratio")
    ref, test = _as_array(ref_batch), _as_array(test_batch)
    g = net.forward(np.vstack([ref, test]))
    loss = _onnr_loss_from_output(g, len(ref), alpha)
    return loss, net.backward(_onnr_output_grad(g, len(ref), alpha)).copy()


def onnr_score(test_batch, net: NeuralNet) -> float:
    """Pearson-divergence score: mean of g over the test batch minus one."""
    _require_head(net, "ratio")
    return float(np.mean(net.forward(_as_array(test_batch))) - 1.0)


# ---------------------------------------------------------------- smoothing


class ScoreBuffer:
    """Ring buffer of the last ``l/n + 1`` raw scores plus the current running mean."""

    def __init__(self, l: int, n: int):
        if n < 1 or l < n or l % n:
            raise ValueError("n must divide l")
        self.l, self.n = l, n
        self.raw = np.zeros(l // n + 1)
        self.pos = 0
        self.mean = 0.0

    def __len__(self) -> int:
        return self.raw.size

    def push(self, d_t: float) -> float:
        oldest = self.raw[self.pos]  # d(t - l - n)
        self.mean = self.mean + (d_t - oldest) / self.l
        self.raw[self.pos] = d_t
        self.pos = (self.pos + 1) % self.raw.size
        return self.mean


def update_running_mean(buffer: ScoreBuffer, d_t: float, l: int | None = None, n: int | None = None) -> float:
    """Advance ``buffer`` with raw score ``d_t`` and return the new running mean."""
    if (l is not None and l != buffer.l) or (n is not None and n != buffer.n):
        raise ValueError("buffer was built for a different (l, n)")
    return buffer.push(d_t)


def replay_running_mean(raw: Sequence[float], l: int, n: int) -> np.ndarray:
    buf = ScoreBuffer(l, n)
    return np.array([buf.push(float(d)) for d in raw])


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class ScoreSeries:
    """Scores on the step grid.

    ``times`` are the time indices at which ``raw`` and ``smoothed`` were
    computed. After :func:`shift_offline` the same values are re-indexed by
    ``-(l + n)`` and ``shifted`` is set.
    """

    times: np.ndarray
    raw: np.ndarray
    smoothed: np.ndarray
    l: int
    n: int
    shifted: bool = False

    def __len__(self) -> int:
        return self.times.size

    @property
    def online_times(self) -> np.ndarray:
        return self.times + self.l + self.n if self.shifted else self.times

    @property
    def valid_range(self) -> tuple[int, int]:
        if not len(self):
            return (0, -1)
        return int(self.times[0]), int(self.times[-1])


def shift_offline(score: ScoreSeries, l: int | None = None, n: int | None = None) -> ScoreSeries:
    """Offline-equivalent score ``dbar'(t) = dbar(t + l + n)``."""
    if score.shifted:
        raise ValueError("score series is already shifted")
    l = score.l if l is None else l
    n = score.n if n is None else n
    return replace(score, times=score.times - (l + n), shifted=True)


THRESHOLD_FACTOR = 4.0


def default_threshold(values: np.ndarray, factor: float = THRESHOLD_FACTOR) -> float:
    """Per-series peak threshold: ``factor`` times the RMS of the negative part.

    Without a change the smoothed score fluctuates around zero in both
    directions, while change points only push it up. The negative half is
    therefore a noise-scale estimate that the peaks themselves do not
    inflate, unlike the standard deviation of the whole series. The result
    is at least machine epsilon, so a flat zero score yields no detections.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return np.inf
    neg = np.minimum(values, 0.0)
    return float(max(factor * np.sqrt(np.mean(neg * neg)), np.finfo(float).eps))


def default_min_distance(l: int) -> int:
    """Peak suppression radius of ``1.5 * l``.

    One change moves the running mean for about ``2 * l`` steps and the
    ratio detector shows a side lobe roughly ``l`` away from the main peak.
    """
    return (3 * l + 1) // 2


def extract_peaks(score: ScoreSeries, threshold: float | None = None, min_distance: int | None = None) -> np.ndarray:
    """Greedy non-maximum suppression over the shifted score.

    Candidates are the local maxima (no lower than either grid neighbour)
    at or above ``threshold``. The highest remaining candidate is emitted
    and every candidate within ``min_distance`` time steps of it is
    suppressed. Ties go to the earlier time. Returns positions, ascending.
    """
    if threshold is None:
        threshold = default_threshold(score.smoothed)
    if min_distance is None:
        min_distance = default_min_distance(score.l)
    if min_distance < 1:
        raise ValueError("min_distance must be >= 1")
    values, times = score.smoothed, score.times
    order = np.argsort(-values, kind="stable")
    alive = np.ones(values.size, dtype=bool)
    alive[1:] &= values[1:] >= values[:-1]
    alive[:-1] &= values[:-1] >= values[1:]
    picked = []
    for i in order:
        if values[i] < threshold:
            break
        if not alive[i]:
            continue
        picked.append(int(times[i]))
        lo = np.searchsorted(times, times[i] - min_distance, side="left")
        hi = np.searchsorted(times, times[i] + min_distance, side="right")
        alive[lo:hi] = False
    return np.array(sorted(picked), dtype=np.int64)


@dataclass(frozen=True)
class DetectionResult:
    score: ScoreSeries
    detected_cps: np.ndarray
    threshold: float
    min_distance: int
    step_time_mean: float = 0.0
    step_time_max: float = 0.0
    config: DetectorConfig | None = field(default=None, compare=False)


# ---------------------------------------------------------------- detectors


class RunningScaler:
    """Per-feature standardisation with statistics of the observations seen so far.

    Welford updates keep O(d) state. Both mini-batches of a step are
    scaled with the same statistics.
    """

    def __init__(self, d: int, k: int = 1):
        self.k = k
        self.count = 0
        self.mean = np.zeros(d)
        self.m2 = np.zeros(d)

    def update(self, obs: np.ndarray) -> None:
        for x in np.atleast_2d(obs):
            self.count += 1
            delta = x - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (x - self.mean)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        std = np.sqrt(self.m2 / self.count) if self.count > 1 else np.ones_like(self.m2)
        std = np.where(std > 1e-12, std, 1.0)
        return (rows - np.tile(self.mean, self.k)) / np.tile(std, self.k)

    def state_size(self) -> int:
        return 2 * self.mean.size + 1


class OnlineONNC:
    """Streaming state of the classification detector: one network and a score buffer."""

    def __init__(self, dim_in: int, config: DetectorConfig):
        self.config = config
        self.net = NeuralNet(dim_in, config.hidden, head="sigmoid", activation=config.activation,
                             lr=config.lr, seed=config.seed)
        self.buffer = ScoreBuffer(config.l, config.n)

    def state_size(self) -> int:
        return self.net.state_size() + len(self.buffer) + 1

    def process(self, ref: np.ndarray, test: np.ndarray) -> tuple[float, float]:
        """Score the pair, update the running mean, then train on the pair."""
        net, n_ref = self.net, len(ref)
        X = np.vstack([ref, test])
        f = net.forward(X)
        d = _onnc_from_output(f, n_ref)[1]
        dbar = self.buffer.push(d)
        for epoch in range(self.config.n_epochs):
            if epoch:
                f = net.forward(X)
            net.adam_step(net.backward(grad_logit=_onnc_logit_grad(f, n_ref)))
        return d, dbar


class OnlineONNR:
    """Streaming state of the regression detector: two ratio networks and a score buffer.

    ``g1`` estimates p_test / p_ref and ``g2`` the reverse ratio.
    """

    def __init__(self, dim_in: int, config: DetectorConfig, seeds: tuple[int, int] | None = None):
        self.config = config
        s1, s2 = seeds if seeds is not None else (config.seed, config.seed + 1)
        kw = dict(head=config.ratio_head, activation=config.activation, lr=config.lr)
        self.g1 = NeuralNet(dim_in, config.hidden, seed=s1, **kw)
        self.g2 = NeuralNet(dim_in, config.hidden, seed=s2, **kw)
        self.buffer = ScoreBuffer(config.l, config.n)

    def state_size(self) -> int:
        return self.g1.state_size() + self.g2.state_size() + len(self.buffer) + 1

    def _train(self, net: NeuralNet, X: np.ndarray, g: np.ndarray, n_ref: int):
        alpha = self.config.alpha
        for epoch in range(self.config.n_epochs):
            if epoch:
                g = net.forward(X)
            net.adam_step(net.backward(_onnr_output_grad(g, n_ref, alpha)))

    def process(self, ref: np.ndarray, test: np.ndarray) -> tuple[float, float]:
        n_ref = len(ref)
        X1 = np.vstack([ref, test])
        X2 = np.vstack([test, ref])
        g1 = self.g1.forward(X1)
        d1 = float(np.mean(g1[n_ref:]) - 1.0)
        g2 = self.g2.forward(X2)
        d2 = float(np.mean(g2[len(test):]) - 1.0)
        d = d1 + d2
        dbar = self.buffer.push(d)
        self._train(self.g1, X1, g1, n_ref)
        self._train(self.g2, X2, g2, len(test))
        return d, dbar


def _run(detector_cls, series, config: DetectorConfig, threshold, min_distance) -> DetectionResult:
    series = as_series(series)
    if series.T < config.k + config.n + config.l:
        raise ValueError("series shorter than warm-up horizon")
    emb: EmbeddedSeries = embed(series, config.k)
    detector = detector_cls(emb.dim, config)
    start = series.start_index - 1 + config.warmup
    times = np.arange(start, emb.last_index + 1, config.n)
    raw = np.empty(times.size)
    smoothed = np.empty(times.size)
    step_times = np.empty(times.size)
    n, l = config.n, config.l
    scaler = RunningScaler(series.d, config.k) if config.scale == "running" else None
    seen = 0  # observations fed to the scaler
    for j, t in enumerate(times):
        t0 = time.perf_counter()
        ref = emb.rows(int(t) - l, n)
        test = emb.rows(int(t), n)
        if scaler is not None:
            upto = int(t) - series.start_index + 1
            scaler.update(series.values[seen:upto])
            seen = upto
            ref, test = scaler.transform(ref), scaler.transform(test)
        raw[j], smoothed[j] = detector.process(ref, test)
        step_times[j] = time.perf_counter() - t0
    score = shift_offline(ScoreSeries(times, raw, smoothed, l=l, n=n))
    if threshold is None:
        threshold = default_threshold(score.smoothed)
    if min_distance is None:
        min_distance = default_min_distance(l)
    cps = extract_peaks(score, threshold, min_distance)
    return DetectionResult(score=score, detected_cps=cps, threshold=float(threshold),
                           min_distance=int(min_distance),
                           step_time_mean=float(step_times.mean()) if times.size else 0.0,
                           step_time_max=float(step_times.max()) if times.size else 0.0,
                           config=config)


def run_onnc(series: TimeSeries, config: DetectorConfig, threshold: float | None = None,
             min_distance: int | None = None) -> DetectionResult:
    """Run the classification detector over a whole series.

    The returned score is already shifted to the offline-equivalent index.
    """
    return _run(OnlineONNC, series, config, threshold, min_distance)


def run_onnr(series: TimeSeries, config: DetectorConfig, threshold: float | None = None,
             min_distance: int | None = None) -> DetectionResult:
    """Run the two-network regression detector over a whole series."""
    return _run(OnlineONNR, series, config, threshold, min_distance)


DETECTORS = {"onnc": run_onnc, "onnr": run_onnr}
