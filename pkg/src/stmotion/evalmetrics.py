"""Evaluation metrics: Euler, geodesic and positional errors, PCK (AUC),
and power-spectrum entropy / symmetric KL divergence for long horizons.

Angle metrics operate on stacked flattened rotation matrices of shape
(B, T, N, 9) (a single sequence (T, N, 9) is promoted). Horizons are given
in milliseconds and averaged over all frames up to each horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import so3
from .motiondata import Skeleton, fk_positions
from .model import zero_velocity  # noqa: F401  (re-exported baseline)


def _promote(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[-1] != 9:
        raise ValueError(f"expected (B, T, N, 9) rotations, got {x.shape}")
    return x


def _mats(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[:-1] + (3, 3))


def horizon_frames(horizons_ms, frame_rate: float) -> list[int]:
    frames = [max(1, round(h / 1000.0 * frame_rate)) for h in horizons_ms]
    return frames


def metric_euler(pred, target, horizons_ms, frame_rate: float) -> dict[float, float]:
    """Per frame: Euclidean norm of all per-joint Euler-angle differences
    (each component wrapped to (-pi, pi]); averaged over frames up to each
    horizon and over sequences."""
    pred, target = _promote(pred), _promote(target)
    if pred.shape != target.shape:
        raise ValueError("pred/target shape mismatch")
    ep = so3.euler_from_rotmat(_mats(pred))
    et = so3.euler_from_rotmat(_mats(target))
    diff = so3.wrap_angle(ep - et)                      # (B, T, N, 3)
    per_frame = np.sqrt((diff ** 2).sum(axis=(2, 3)))   # (B, T)
    return {h: float(per_frame[:, :f].mean())
            for h, f in zip(horizons_ms, horizon_frames(horizons_ms, frame_rate))}


def metric_geodesic(pred, target, horizons_ms, frame_rate: float) -> dict[float, float]:
    """Mean geodesic rotation distance over joints and frames up to horizon."""
    pred, target = _promote(pred), _promote(target)
    if pred.shape != target.shape:
        raise ValueError("pred/target shape mismatch")
    ang = so3.geodesic_angle(_mats(pred), _mats(target))  # (B, T, N)
    return {h: float(ang[:, :f].mean())
            for h, f in zip(horizons_ms, horizon_frames(horizons_ms, frame_rate))}


def positional_errors(pred, target, skeleton: Skeleton) -> np.ndarray:
    """Per-(sequence, frame, joint) Euclidean distance in millimeters."""
    pred, target = _promote(pred), _promote(target)
    pp = fk_positions(_mats(pred), skeleton)
    pt = fk_positions(_mats(target), skeleton)
    return np.linalg.norm(pp - pt, axis=-1)  # (B, T, N)


def metric_positional(pred, target, skeleton: Skeleton, horizons_ms,
                      frame_rate: float) -> dict[float, float]:
    err = positional_errors(pred, target, skeleton)
    return {h: float(err[:, :f].mean())
            for h, f in zip(horizons_ms, horizon_frames(horizons_ms, frame_rate))}


DEFAULT_PCK_THRESHOLDS = tuple(float(t) for t in range(0, 301, 10))  # mm


def metric_pck_auc(pred, target, skeleton: Skeleton, horizons_ms, frame_rate: float,
                   thresholds=DEFAULT_PCK_THRESHOLDS) -> dict[float, float]:
    """PCK(tau) = percent of (joint, frame) pairs within tau millimeters;
    AUC is the trapezoidal mean of PCK over the threshold grid."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.size == 0:
        raise ValueError("thresholds must be non-empty")
    if thresholds.size > 1 and not np.all(np.diff(thresholds) > 0):
        raise ValueError("thresholds must be strictly increasing")
    err = positional_errors(pred, target, skeleton)
    out = {}
    for h, f in zip(horizons_ms, horizon_frames(horizons_ms, frame_rate)):
        e = err[:, :f].reshape(-1)
        pck = np.array([100.0 * (e <= t).mean() for t in thresholds])
        if thresholds.size == 1:
            out[h] = float(pck[0])
        else:
            auc = np.trapezoid(pck, thresholds) / (thresholds[-1] - thresholds[0])
            out[h] = float(auc)
    return out


# ---------------------------------------------------------------------------
# Radix-2 FFT and power-spectrum distributions
# ---------------------------------------------------------------------------


def fft_radix2(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis.

    The transform length must be a power of two; input may be real or
    complex and is vectorized over leading axes."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n == 0 or (n & (n - 1)) != 0:
        raise ValueError(f"FFT length must be a power of two, got {n}")
    # bit-reversal permutation
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    bits = n.bit_length() - 1
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    out = x[..., rev].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        shaped = out.reshape(out.shape[:-1] + (n // size, size))
        even = shaped[..., :half].copy()
        odd = shaped[..., half:] * tw
        shaped[..., :half] = even + odd
        shaped[..., half:] = even - odd
        size *= 2
    return out


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


@dataclass
class PSDistribution:
    """Per-feature normalized power spectrum (features are joint coordinates)."""

    spectra: np.ndarray   # (F, K), each row non-negative, sums to 1
    window_len: int       # frames per window before zero-padding

    @property
    def n_features(self) -> int:
        return self.spectra.shape[0]

    @property
    def n_bins(self) -> int:
        return self.spectra.shape[1]


def ps_of_windows(windows, skeleton: Skeleton) -> PSDistribution:
    """Power-spectrum distribution of joint-coordinate trajectories.

    Each window is a (T_w, N, 9) rotation sequence; it is converted to 3D
    positions with forward kinematics, each of the 3N coordinate signals is
    zero-padded to the next power of two and transformed, squared FFT
    magnitudes are averaged over windows, and every feature's spectrum is
    normalized to sum 1."""
    windows = [np.asarray(w) for w in windows]
    if not windows:
        raise ValueError("need at least one window")
    t_w = windows[0].shape[0]
    if any(w.shape[0] != t_w for w in windows):
        raise ValueError("all windows must have equal length")
    k = next_pow2(t_w)
    stack = np.stack(windows)                           # (W, T_w, N, 9)
    pos = fk_positions(_mats(stack), skeleton)          # (W, T_w, N, 3)
    w_count, _, n, _ = pos.shape
    feats = pos.transpose(0, 2, 3, 1).reshape(w_count, 3 * n, t_w)
    padded = np.zeros((w_count, 3 * n, k))
    padded[..., :t_w] = feats
    power = np.abs(fft_radix2(padded)) ** 2             # (W, F, K)
    mean = power.mean(axis=0)
    total = mean.sum(axis=-1, keepdims=True)
    total = np.where(total > 0, total, 1.0)
    return PSDistribution(spectra=mean / total, window_len=t_w)


def ps_entropy(dist: PSDistribution) -> float:
    """Mean over features of the Shannon entropy of the normalized spectrum
    (natural log, 0 log 0 := 0)."""
    p = dist.spectra
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return float(terms.sum(axis=-1).mean())


_KLD_EPS = 1e-10


def ps_kld(reference: PSDistribution, prediction: PSDistribution) -> float:
    """Symmetric KL divergence between power-spectrum distributions:
    (KLD(G||P) + KLD(P||G)) / 2, per feature, averaged over features.
    Both sides receive additive smoothing before renormalization."""
    if reference.spectra.shape != prediction.spectra.shape:
        raise ValueError("feature/bin count mismatch between distributions")
    g = reference.spectra + _KLD_EPS
    p = prediction.spectra + _KLD_EPS
    g = g / g.sum(axis=-1, keepdims=True)
    p = p / p.sum(axis=-1, keepdims=True)
    kl_gp = (g * np.log(g / p)).sum(axis=-1)
    kl_pg = (p * np.log(p / g)).sum(axis=-1)
    return float((0.5 * (kl_gp + kl_pg)).mean())


def longterm_eval(prediction, skeleton: Skeleton, reference_windows,
                  frame_rate: float):
    """Per-second spectrum curves of an arbitrarily long prediction.

    prediction: (T, N, 9) rollout; reference_windows: list of 1-second
    (T_w, N, 9) clips defining the reference distribution G. Returns
    (seconds list, ps_kld list, ps_entropy list) with one entry per full
    non-overlapping 1-second prediction window."""
    prediction = np.asarray(prediction)
    t_w = reference_windows[0].shape[0]
    if prediction.shape[0] < t_w:
        raise ValueError("prediction shorter than one reference window")
    g = ps_of_windows(reference_windows, skeleton)
    seconds, klds, ents = [], [], []
    n_windows = prediction.shape[0] // t_w
    for i in range(n_windows):
        p_t = ps_of_windows([prediction[i * t_w:(i + 1) * t_w]], skeleton)
        seconds.append(i + 1)
        klds.append(ps_kld(g, p_t))
        ents.append(ps_entropy(p_t))
    return seconds, klds, ents


def write_metric_csv(path, report: dict[float, dict[str, float]]):
    """`horizon_ms,euler,geodesic,positional_mm,pck_auc` rows."""
    with open(path, "w") as fh:
        fh.write("horizon_ms,euler,geodesic,positional_mm,pck_auc\n")
        for h in sorted(report):
            r = report[h]
            fh.write(f"{h},{r['euler']!r},{r['geodesic']!r},"
                     f"{r['positional_mm']!r},{r['pck_auc']!r}\n")


def write_longterm_csv(path, seconds, klds, ents):
    """`second,ps_kld,ps_entropy` rows."""
    with open(path, "w") as fh:
        fh.write("second,ps_kld,ps_entropy\n")
        for s, k, e in zip(seconds, klds, ents):
            fh.write(f"{s},{k!r},{e!r}\n")


def full_report(pred, target, skeleton: Skeleton, horizons_ms, frame_rate: float):
    """All Table-style metrics keyed by horizon."""
    eu = metric_euler(pred, target, horizons_ms, frame_rate)
    ge = metric_geodesic(pred, target, horizons_ms, frame_rate)
    po = metric_positional(pred, target, skeleton, horizons_ms, frame_rate)
    pk = metric_pck_auc(pred, target, skeleton, horizons_ms, frame_rate)
    return {h: {"euler": eu[h], "geodesic": ge[h],
                "positional_mm": po[h], "pck_auc": pk[h]} for h in horizons_ms}
