import numpy as np
import pytest
from scipy.integrate import quad

from tdscat.forward import NoiseSpec, ScatteredDataSet, add_noise, synth_point_model
from tdscat.geometry import make_circle_sensors, make_fibonacci_sphere_sensors
from tdscat.greenfn import MediumSpec, greens2d_conv, sample_point_response
from tdscat.signal import SignalSpec, TimeGrid, eval_signal

SPEC = SignalSpec(4.0, 1.6, 3.0)
MED = MediumSpec(1.0)


@pytest.fixture(scope="module")
def sensors():
    return make_circle_sensors(20, 4.0)


@pytest.fixture(scope="module")
def tgrid():
    return TimeGrid(25.0, 64)


class TestPointModel3D:
    def test_single_center_is_kernel_tensor(self, sensors, tgrid):
        data = synth_point_model([[0.0, 0.0]], [1.0], sensors, sensors, tgrid, SPEC, MED, 3)
        ref = sample_point_response(sensors.points, sensors.points, [0.0, 0.0], tgrid, SPEC, MED)
        assert np.array_equal(data.values, ref)

    def test_linearity_in_strength(self, sensors, tgrid):
        d1 = synth_point_model([[0.3, -0.2]], [1.0], sensors, sensors, tgrid, SPEC, MED, 3)
        d2 = synth_point_model([[0.3, -0.2]], [2.0], sensors, sensors, tgrid, SPEC, MED, 3)
        assert np.array_equal(d2.values, 2.0 * d1.values)

    def test_superposition(self, sensors, tgrid):
        centers = [[0.5, 0.5], [-1.0, 0.2]]
        both = synth_point_model(centers, [1.0, 0.7], sensors, sensors, tgrid, SPEC, MED, 3)
        a = synth_point_model([centers[0]], [1.0], sensors, sensors, tgrid, SPEC, MED, 3)
        b = synth_point_model([centers[1]], [0.7], sensors, sensors, tgrid, SPEC, MED, 3)
        assert np.array_equal(both.values, a.values + b.values)

    def test_initial_condition(self, sensors, tgrid):
        data = synth_point_model([[0.4, 0.1]], [1.0], sensors, sensors, tgrid, SPEC, MED, 3)
        assert np.all(data.values[:, 0, :] == 0.0)

    def test_center_on_sensor_rejected(self, sensors, tgrid):
        with pytest.raises(ValueError):
            synth_point_model([sensors.points[0]], [1.0], sensors, sensors, tgrid, SPEC, MED, 3)

    def test_point_like_warning(self, sensors, tgrid):
        with pytest.warns(UserWarning, match="center wavelength"):
            synth_point_model(
                [[0.0, 0.0]], [1.0], sensors, sensors, tgrid, SPEC, MED, 3, diameters=[0.5]
            )


class TestPointModel2D:
    def test_exact_causality(self, sensors, tgrid):
        data = synth_point_model([[0.0, 0.0]], [1.0], sensors, sensors, tgrid, SPEC, MED, 2)
        ts = tgrid.nodes()
        # both travel legs are length 4, so nothing arrives before t = 8
        assert np.all(data.values[:, ts <= 8.0, :] == 0.0)

    def test_matches_nested_quadrature(self, sensors):
        tg = TimeGrid(25.0, 128)
        data = synth_point_model([[0.0, 0.0]], [1.0], sensors, sensors, tg, SPEC, MED, 2)

        def inner(tau):
            return greens2d_conv([0, 0], [4, 0], float(tau), SPEC, MED)

        def outer(t, r1=4.0):
            if t <= r1:
                return 0.0
            f = lambda s: inner(t - s) / (2 * np.pi * np.sqrt(s + r1))
            val, _ = quad(f, r1, t, weight="alg", wvar=(-0.5, 0.0), limit=300,
                          epsabs=1e-12, epsrel=1e-9)
            return -val

        ts = tg.nodes()
        for k in (60, 90, 128):
            assert data.values[0, k, 0] == pytest.approx(outer(ts[k]), rel=1e-5)

    def test_superposition_and_scaling(self, sensors):
        tg = TimeGrid(15.0, 32)
        a = synth_point_model([[0.5, 0.0]], [1.0], sensors, sensors, tg, SPEC, MED, 2)
        b = synth_point_model([[-0.5, 0.5]], [1.0], sensors, sensors, tg, SPEC, MED, 2)
        both = synth_point_model(
            [[0.5, 0.0], [-0.5, 0.5]], [1.0, 3.0], sensors, sensors, tg, SPEC, MED, 2
        )
        assert np.allclose(both.values, a.values + 3.0 * b.values, rtol=0, atol=1e-18)


class TestPointModel3DSphere:
    def test_sphere_layout_runs(self):
        sph = make_fibonacci_sphere_sensors(12, 4.0)
        tg = TimeGrid(19.0, 32)
        data = synth_point_model([[0.4, -0.8, 0.2]], [1.0], sph, sph, tg, SPEC, MED, 3)
        assert data.values.shape == (12, 33, 12)
        assert np.abs(data.values).max() > 0


class TestNoise:
    @pytest.fixture(scope="class")
    def data(self, sensors):
        tg = TimeGrid(25.0, 32)
        return synth_point_model([[0.0, 0.0]], [1.0], sensors, sensors, tg, SPEC, MED, 3)

    def test_zero_level_identical(self, data):
        noisy = add_noise(data, NoiseSpec(0.0, 123))
        assert np.array_equal(noisy.values, data.values)

    def test_entrywise_bound(self, data):
        for level in (0.05, 0.2, 1.0):
            noisy = add_noise(data, NoiseSpec(level, 7))
            assert np.all(np.abs(noisy.values - data.values) <= level * np.abs(data.values))

    def test_seed_reproducibility(self, data):
        a = add_noise(data, NoiseSpec(0.05, 42))
        b = add_noise(data, NoiseSpec(0.05, 42))
        assert np.array_equal(a.values, b.values)
        c = add_noise(data, NoiseSpec(0.05, 43))
        assert not np.array_equal(a.values, c.values)

    def test_metadata_updated(self, data):
        noisy = add_noise(data, NoiseSpec(0.05, 42))
        assert noisy.meta["noise_level"] == 0.05
        assert noisy.meta["noise_seed"] == 42
        assert data.meta["noise_level"] == 0.0

    def test_negative_level_rejected(self):
        with pytest.raises(ValueError):
            NoiseSpec(-0.1, 0)


def test_tensor_shape_validated(sensors, tgrid):
    with pytest.raises(ValueError, match="tensor shape"):
        ScatteredDataSet(
            sensors, sensors, tgrid, SPEC, MED, 2,
            np.zeros((3, 3, 3)),
        )
