"""Boundary-integral forward solver tests.

The independent oracle (tests/oracles.py) is the separation-of-variables
series for the sound-soft disk: both the scattered field and the
combined-field density have closed forms because the layer potentials of
circular harmonics on a circle are scalar multiples of themselves.
"""

import numpy as np
import pytest
from scipy.special import hankel1

from oracles import mie_density, mie_scattered
from tdscat.bie import BieParams, retained_band, solve_frequency, synth_bie_2d
from tdscat.forward import add_noise
from tdscat.geometry import make_boundary, make_circle_sensors
from tdscat.greenfn import MediumSpec, greens2d_conv
from tdscat.signal import SignalSpec, TimeGrid, eval_signal

SPEC = SignalSpec(4.0, 1.6, 3.0)
MED = MediumSpec(1.0)


@pytest.fixture(scope="module")
def disk():
    return make_boundary("circle", (0, 0), 1.0, 128)


@pytest.fixture(scope="module")
def sensors():
    return make_circle_sensors(20, 4.0)


class TestFrequencySolve:
    @pytest.mark.parametrize("k", [1.0, 2.0, 4.0, 8.0])
    def test_density_matches_series(self, disk, k):
        src = np.array([4.0, 0.0])
        sol = solve_frequency([disk], k, src[None, :])
        ref = mie_density(disk.thetas, k, src, eta=k)
        err = np.abs(sol.density[:, 0] - ref).max() / np.abs(ref).max()
        assert err < 1e-6

    @pytest.mark.parametrize("k", [1.0, 2.0, 4.0, 8.0])
    def test_near_field_matches_series(self, disk, k):
        src = np.array([4.0, 0.0])
        sol = solve_frequency([disk], k, src[None, :])
        ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
        for rr in (2.5, 4.0):
            pts = rr * np.stack([np.cos(ang), np.sin(ang)], -1)
            got = sol.scattered(pts)[:, 0]
            ref = mie_scattered(pts, k, src)
            assert np.abs(got - ref).max() / np.abs(ref).max() < 1e-6

    @pytest.mark.parametrize("k", [1.0, 4.0])
    def test_boundary_condition_residual(self, disk, k):
        src = np.array([[4.0, 0.0], [0.0, -4.0]])
        sol = solve_frequency([disk], k, src)
        assert sol.boundary_residual() < 1e-6

    def test_multi_body_residual(self):
        curves = [
            make_boundary("circle", (-1, -1), 4.0 / 9.0, 96),
            make_boundary("kite", (1, 1), 0.5, 96),
        ]
        sol = solve_frequency(curves, 4.0, np.array([[4.0, 0.0]]))
        assert sol.boundary_residual() < 1e-6

    def test_zero_coupling_rejected(self, disk):
        with pytest.raises(ValueError, match="coupling"):
            solve_frequency([disk], 4.0, np.array([[4.0, 0.0]]), eta=0.0)


class TestFrequencyBand:
    def test_retained_band_reconstructs_pulse(self):
        tg = TimeGrid(25.0, 128)
        params = BieParams()
        n_pad, omegas, lam_hat, mask = retained_band(SPEC, tg, params)
        masked = np.where(mask, lam_hat, 0.0)
        recon = np.fft.irfft(masked, n=n_pad)[: tg.n_nodes]
        lam = np.asarray(eval_signal(SPEC, tg.nodes()))
        assert np.abs(recon - lam).max() < 1e-3 * np.abs(lam).max()

    def test_dc_bin_never_retained(self):
        tg = TimeGrid(25.0, 128)
        _, _, _, mask = retained_band(SPEC, tg, BieParams())
        assert not mask[0]

    def test_incident_synthesis_matches_time_domain(self):
        # validates the transform conventions end to end on the padded grid
        tg = TimeGrid(25.0, 128)
        params = BieParams()
        n_pad, omegas, lam_hat, mask = retained_band(SPEC, tg, params)
        r = 3.7
        spectrum = np.zeros(len(omegas), complex)
        qs = np.nonzero(mask)[0]
        spectrum[qs] = np.conj(0.25j * hankel1(0, omegas[qs] * r)) * lam_hat[qs]
        trace = np.fft.irfft(spectrum, n=n_pad)[: tg.n_nodes]
        trace -= trace[0]
        ref = greens2d_conv([0, 0], [r, 0], tg.nodes(), SPEC, MED)
        assert np.abs(trace - ref).max() < 1e-3 * np.abs(ref).max()

    def test_padding_floor_enforced(self):
        with pytest.raises(ValueError):
            BieParams(padding_factor=1.0)


class TestTimeSynthesis:
    def test_empty_boundary_list_gives_zeros(self, sensors):
        tg = TimeGrid(15.0, 32)
        data = synth_bie_2d([], sensors, sensors, tg, SPEC, MED)
        assert not data.values.any()

    @pytest.fixture(scope="class")
    def disk_data(self, sensors):
        tg = TimeGrid(15.0, 128)
        curve = make_boundary("circle", (0, 0), 1.0, 128)
        return synth_bie_2d([curve], sensors, sensors, tg, SPEC, MED,
                            BieParams(nodes_per_curve=128))

    def test_initial_condition_exact(self, disk_data):
        assert np.all(disk_data.values[:, 0, :] == 0.0)

    def test_pre_arrival_quiet(self, disk_data, sensors):
        curve = make_boundary("circle", (0, 0), 1.0, 128)
        ts = disk_data.tgrid.nodes()
        worst = 0.0
        for i in range(sensors.n_points):
            for j in range(sensors.n_points):
                d1 = np.linalg.norm(curve.nodes - sensors.points[j], axis=1).min()
                d2 = np.linalg.norm(curve.nodes - sensors.points[i], axis=1).min()
                trace = disk_data.values[i, :, j]
                mask = ts < (d1 + d2)
                if mask.any():
                    worst = max(worst, np.abs(trace[mask]).max() / np.abs(trace).max())
        assert worst < 1e-3

    def test_noise_applies_to_bie_data(self, disk_data):
        from tdscat.forward import NoiseSpec

        noisy = add_noise(disk_data, NoiseSpec(0.05, 5))
        assert np.all(np.abs(noisy.values - disk_data.values) <= 0.05 * np.abs(disk_data.values))
