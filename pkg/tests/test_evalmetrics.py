import numpy as np
import pytest

from stmotion import evalmetrics as ev
from stmotion import motiondata as md
from stmotion import so3


def rot_seq(n_frames, seed=0):
    sk = md.default_skeleton()
    rng = np.random.default_rng(seed)
    rots = so3.random_rotations(n_frames * sk.n_joints, rng).reshape(
        n_frames, sk.n_joints, 9).astype(np.float32)
    return sk, rots


def rx_flat(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([1, 0, 0, 0, c, -s, 0, s, c], dtype=np.float32)


class TestAngleMetrics:
    def test_identical_sequences_zero(self):
        sk, rots = rot_seq(10)
        horizons = [100.0, 166.0]
        eu = ev.metric_euler(rots, rots, horizons, 60.0)
        ge = ev.metric_geodesic(rots, rots, horizons, 60.0)
        for h in horizons:
            assert eu[h] < 1e-5
            # arccos near 1 amplifies float32 rounding, so allow ~1e-3
            assert ge[h] < 1e-3

    def test_geodesic_single_joint_offset(self):
        # one joint off by a known angle: mean = theta / n_joints
        sk, rots = rot_seq(4)
        theta = 0.3
        pred = rots.copy()
        base = rots[:, 0].reshape(4, 3, 3).astype(np.float64)
        Rx = so3.rotmat_from_angleaxis([theta, 0, 0])
        pred[:, 0] = (base @ Rx).reshape(4, 9).astype(np.float32)
        ge = ev.metric_geodesic(pred, rots, [1000.0], 60.0)[1000.0]
        assert abs(ge - theta / sk.n_joints) < 1e-3

    def test_euler_single_axis_offset(self):
        # identity vs x-rotation on every joint: per-joint euler diff is
        # (theta, 0, 0) so the per-frame norm is theta * sqrt(N)
        sk = md.default_skeleton()
        n = sk.n_joints
        theta = 0.25
        tgt = np.tile(np.eye(3).reshape(9).astype(np.float32), (6, n, 1))
        pred = np.tile(rx_flat(theta), (6, n, 1))
        eu = ev.metric_euler(pred, tgt, [1000.0], 60.0)[1000.0]
        assert abs(eu - theta * np.sqrt(n)) < 1e-5

    def test_euler_wrapping(self):
        # angles pi - eps vs -(pi - eps) differ by 2*eps after wrapping,
        # not by nearly 2*pi
        eps = 0.01
        sk = md.default_skeleton()
        n = sk.n_joints
        a = np.tile(rx_flat(np.pi - eps), (2, n, 1))
        b = np.tile(rx_flat(-(np.pi - eps)), (2, n, 1))
        eu = ev.metric_euler(a, b, [1000.0], 60.0)[1000.0]
        assert abs(eu - 2 * eps * np.sqrt(n)) < 1e-4

    def test_horizon_truncation(self):
        # errors only in late frames are invisible at short horizons
        sk, rots = rot_seq(10)
        pred = rots.copy()
        pred[5:] = np.tile(rx_flat(0.5), (5, sk.n_joints, 1))
        short = ev.metric_geodesic(pred, rots, [50.0], 60.0)[50.0]  # 3 frames
        full = ev.metric_geodesic(pred, rots, [166.7], 60.0)[166.7]
        assert short < 1e-4
        assert full > 0.01

    def test_horizon_frames(self):
        assert ev.horizon_frames([400.0], 25.0) == [10]
        assert ev.horizon_frames([80.0, 160.0, 1000.0], 25.0) == [2, 4, 25]
        assert ev.horizon_frames([1.0], 25.0) == [1]  # never zero frames

    def test_shape_mismatch(self):
        _, rots = rot_seq(5)
        with pytest.raises(ValueError):
            ev.metric_euler(rots, rots[:3], [100.0], 60.0)


class TestPositionalMetrics:
    def test_zero_on_equal(self):
        sk, rots = rot_seq(5)
        assert ev.metric_positional(rots, rots, sk, [100.0], 60.0)[100.0] < 1e-6

    def test_straight_arm_block_oracle(self):
        # rotating only l_collar by theta moves the l_arm end by a chord of
        # the circle with radius |l_arm offset|
        sk = md.default_skeleton()
        n = sk.n_joints
        j = sk.joint_names.index("l_collar")
        child = sk.joint_names.index("l_arm")
        theta = 0.4
        tgt = np.tile(np.eye(3).reshape(9).astype(np.float32), (1, n, 1))
        pred = tgt.copy()
        pred[0, j] = so3.rotmat_from_angleaxis([0, 0, theta]).reshape(9)
        err = ev.positional_errors(pred, tgt, sk)[0, 0]
        radius = np.linalg.norm(sk.offset[child])
        chord = 2 * radius * np.sin(theta / 2)
        assert abs(err[j]) < 1e-6          # the rotated joint itself stays put
        assert abs(err[child] - chord) < 1e-6

    def test_pck_extreme_thresholds(self):
        sk, rots = rot_seq(5, seed=1)
        _, pred = rot_seq(5, seed=2)
        # single huge threshold: everything within -> 100
        assert ev.metric_pck_auc(pred, rots, sk, [100.0], 60.0,
                                 thresholds=(1e9,))[100.0] == 100.0
        assert ev.metric_pck_auc(rots, rots, sk, [100.0], 60.0)[100.0] == 100.0

    def test_pck_statistical(self):
        # 50% of joints displaced beyond the largest threshold ->
        # AUC close to 50
        sk = md.default_skeleton()
        n = sk.n_joints
        tgt = np.tile(np.eye(3).reshape(9).astype(np.float32), (40, n, 1))
        pred = tgt.copy()
        pred[:20, 0] = rx_flat(np.pi / 2)  # root turn displaces most joints far
        auc_half = ev.metric_pck_auc(pred, tgt, sk, [1000.0], 60.0,
                                     thresholds=(0.0, 1.0))[1000.0]
        frac_exact = 100.0 * (ev.positional_errors(pred, tgt, sk) <= 1.0).mean()
        assert abs(auc_half - frac_exact) < 1e-6

    def test_pck_bad_thresholds(self):
        sk, rots = rot_seq(3)
        with pytest.raises(ValueError):
            ev.metric_pck_auc(rots, rots, sk, [100.0], 60.0, thresholds=())
        with pytest.raises(ValueError):
            ev.metric_pck_auc(rots, rots, sk, [100.0], 60.0, thresholds=(10.0, 5.0))


class TestFft:
    def test_matches_numpy_oracle(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 4, 8, 64, 256):
            x = rng.standard_normal(n)
            np.testing.assert_allclose(ev.fft_radix2(x), np.fft.fft(x), atol=1e-9)

    def test_complex_and_batched(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((3, 5, 32)) + 1j * rng.standard_normal((3, 5, 32))
        np.testing.assert_allclose(ev.fft_radix2(x), np.fft.fft(x, axis=-1), atol=1e-9)

    def test_pure_tone(self):
        n = 64
        k = 5
        x = np.cos(2 * np.pi * k * np.arange(n) / n)
        X = np.abs(ev.fft_radix2(x))
        assert X[k] > n / 2 - 1e-6
        mask = np.ones(n, bool)
        mask[[k, n - k]] = False
        assert np.abs(X[mask]).max() < 1e-9

    def test_non_pow2_rejected(self):
        with pytest.raises(ValueError):
            ev.fft_radix2(np.ones(12))

    def test_next_pow2(self):
        assert [ev.next_pow2(v) for v in (1, 2, 3, 60, 64, 65)] == [1, 2, 4, 64, 64, 128]


class TestPowerSpectrum:
    def test_distribution_normalized(self):
        sk, rots = rot_seq(60)
        dist = ev.ps_of_windows([rots[:30], rots[30:]], sk)
        assert dist.spectra.shape == (3 * sk.n_joints, 32)
        assert np.all(dist.spectra >= 0)
        # rows are normalized to sum 1; identically-zero signals (the root
        # joint's pinned coordinates) keep an all-zero row
        sums = dist.spectra.sum(axis=-1)
        assert np.all((np.abs(sums - 1.0) < 1e-9) | (sums == 0.0))
        assert (np.abs(sums - 1.0) < 1e-9).sum() >= 3 * (sk.n_joints - 1)

    def test_entropy_uniform_is_log_k(self):
        k = 16
        dist = ev.PSDistribution(np.full((4, k), 1.0 / k), window_len=k)
        assert abs(ev.ps_entropy(dist) - np.log(k)) < 1e-12

    def test_entropy_delta_is_zero(self):
        spectra = np.zeros((2, 8))
        spectra[:, 3] = 1.0
        assert ev.ps_entropy(ev.PSDistribution(spectra, 8)) == 0.0

    def test_entropy_ordering(self):
        # flatter spectrum has strictly higher entropy
        peaked = np.array([[0.9, 0.05, 0.03, 0.02]])
        flat = np.array([[0.3, 0.3, 0.2, 0.2]])
        assert ev.ps_entropy(ev.PSDistribution(flat, 4)) > \
            ev.ps_entropy(ev.PSDistribution(peaked, 4))

    def test_static_pose_concentrates_at_dc(self):
        sk = md.default_skeleton()
        frozen = np.tile(np.eye(3).reshape(9).astype(np.float32),
                         (32, sk.n_joints, 1))
        dist = ev.ps_of_windows([frozen], sk)
        # constant signals put all power in bin 0 -> near-zero entropy
        assert ev.ps_entropy(dist) < 1e-6

    def test_kld_zero_on_equal(self):
        sk, rots = rot_seq(32, seed=3)
        d = ev.ps_of_windows([rots], sk)
        assert ev.ps_kld(d, d) == 0.0

    def test_kld_symmetric_and_positive(self):
        sk, a = rot_seq(32, seed=4)
        _, b = rot_seq(32, seed=5)
        da, db = ev.ps_of_windows([a], sk), ev.ps_of_windows([b], sk)
        assert ev.ps_kld(da, db) == pytest.approx(ev.ps_kld(db, da))
        assert ev.ps_kld(da, db) > 0

    def test_kld_hand_computed(self):
        g = ev.PSDistribution(np.array([[0.5, 0.5]]), 2)
        p = ev.PSDistribution(np.array([[0.25, 0.75]]), 2)
        # symmetric KL of the smoothed distributions; smoothing is tiny so
        # compare against the unsmoothed closed form loosely
        expect = 0.5 * (0.5 * np.log(0.5 / 0.25) + 0.5 * np.log(0.5 / 0.75)
                        + 0.25 * np.log(0.25 / 0.5) + 0.75 * np.log(0.75 / 0.5))
        assert abs(ev.ps_kld(g, p) - expect) < 1e-6

    def test_kld_shape_mismatch(self):
        g = ev.PSDistribution(np.full((1, 4), 0.25), 4)
        p = ev.PSDistribution(np.full((1, 8), 0.125), 8)
        with pytest.raises(ValueError):
            ev.ps_kld(g, p)

    def test_mismatched_window_lengths_rejected(self):
        sk, rots = rot_seq(50)
        with pytest.raises(ValueError):
            ev.ps_of_windows([rots[:30], rots[30:]], sk)


class TestLongterm:
    def test_per_second_curves(self):
        sk = md.default_skeleton()
        seq = md.synth_motion(sk, 60 * 8, 60.0, md.two_frequency_spec(sk))
        refs = [w.flat() for w in md.window(seq, 60, 60)][:4]
        pred = seq.flat()[:60 * 3]
        seconds, klds, ents = ev.longterm_eval(pred, sk, refs, 60.0)
        assert seconds == [1, 2, 3]
        assert len(klds) == len(ents) == 3
        # prediction windows come from the reference motion itself, so the
        # divergence stays small
        assert all(k < 0.5 for k in klds)

    def test_frozen_prediction_low_entropy_high_kld(self):
        sk = md.default_skeleton()
        seq = md.synth_motion(sk, 60 * 6, 60.0, md.two_frequency_spec(sk))
        refs = [w.flat() for w in md.window(seq, 60, 60)][:4]
        frozen = np.tile(seq.flat()[0][None], (120, 1, 1))
        _, klds_f, ents_f = ev.longterm_eval(frozen, sk, refs, 60.0)
        _, klds_m, ents_m = ev.longterm_eval(seq.flat()[:120], sk, refs, 60.0)
        assert all(f < m for f, m in zip(ents_f, ents_m))
        assert all(f > m for f, m in zip(klds_f, klds_m))

    def test_too_short_prediction(self):
        sk, rots = rot_seq(10)
        with pytest.raises(ValueError):
            ev.longterm_eval(rots, sk, [np.zeros((60, sk.n_joints, 9))], 60.0)


class TestCsvWriters:
    def test_metric_csv(self, tmp_path):
        sk, rots = rot_seq(30, seed=6)
        _, pred = rot_seq(30, seed=7)
        report = ev.full_report(pred, rots, sk, [80.0, 400.0], 60.0)
        p = tmp_path / "metrics.csv"
        ev.write_metric_csv(p, report)
        lines = p.read_text().strip().split("\n")
        assert lines[0] == "horizon_ms,euler,geodesic,positional_mm,pck_auc"
        assert len(lines) == 3
        first = lines[1].split(",")
        assert float(first[0]) == 80.0
        assert float(first[1]) == report[80.0]["euler"]

    def test_longterm_csv(self, tmp_path):
        p = tmp_path / "lt.csv"
        ev.write_longterm_csv(p, [1, 2], [0.5, 0.25], [1.5, 1.75])
        lines = p.read_text().strip().split("\n")
        assert lines[0] == "second,ps_kld,ps_entropy"
        assert lines[1] == "1,0.5,1.5"
        assert lines[2] == "2,0.25,1.75"

    def test_full_report_consistent(self):
        sk, rots = rot_seq(20, seed=8)
        report = ev.full_report(rots, rots, sk, [100.0], 60.0)
        assert report[100.0]["geodesic"] < 1e-4
        assert report[100.0]["positional_mm"] < 1e-6
        assert report[100.0]["pck_auc"] == 100.0
