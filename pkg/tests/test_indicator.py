import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tdscat._kernels import active_backend, probe_norms
from tdscat.forward import NoiseSpec, add_noise, synth_point_model
from tdscat.geometry import make_circle_sensors, make_sampling_grid
from tdscat.greenfn import MediumSpec
from tdscat.indicator import (
    IndicatorError,
    SweepWorkspace,
    data_self_norm,
    discrete_conv,
    indicator_i1,
    indicator_i1prime,
    indicator_i2,
    indicator_i3,
    local_maxima,
    sweep,
    time_source_norm,
)
from tdscat.signal import SignalSpec, TimeGrid

SPEC = SignalSpec(4.0, 1.6, 3.0)
MED = MediumSpec(1.0)


def conv_reference(f, g, dt):
    n = len(f)
    out = np.zeros(n)
    for k in range(n):
        acc = 0.0
        for l in range(k + 1):
            acc += f[k - l] * g[l]
        out[k] = acc * dt
    return out


class TestDiscreteConv:
    def test_impulse(self):
        g = np.arange(5.0)
        f = np.zeros(5)
        f[0] = 1.0
        assert np.allclose(discrete_conv(f, g, 0.5), g * 0.5)

    def test_constant_inputs(self):
        ones = np.ones(6)
        assert np.array_equal(discrete_conv(ones, ones, 1.0), np.arange(1.0, 7.0))

    def test_commutative_bitwise(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            f, g = rng.normal(size=33), rng.normal(size=33)
            assert np.array_equal(discrete_conv(f, g, 0.2), discrete_conv(g, f, 0.2))

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            discrete_conv(np.ones(4), np.ones(5), 1.0)

    @settings(max_examples=100, deadline=None)
    @given(
        arrays(np.float64, st.integers(2, 64),
               elements=st.floats(-1e3, 1e3, allow_nan=False)),
        st.floats(1e-3, 10.0),
        st.randoms(),
    )
    def test_matches_direct_reference(self, f, dt, rnd):
        g = np.array([rnd.uniform(-1e3, 1e3) for _ in range(len(f))])
        got = discrete_conv(f, g, dt)
        ref = conv_reference(f, g, dt)
        scale = max(np.abs(ref).max(), 1e-30)
        assert np.abs(got - ref).max() <= 1e-12 * scale


class TestTimeSourceNorm:
    def test_zeros(self):
        assert time_source_norm(np.zeros((3, 5)), 0.1, np.ones(3)) == 0.0

    def test_single_entry(self):
        values = np.zeros((1, 8))
        values[0, 3] = -2.5
        assert time_source_norm(values, 0.2, [0.7]) == pytest.approx(
            2.5 * np.sqrt(0.2 * 0.7), rel=1e-14
        )

    def test_homogeneity(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=(4, 9))
        w = rng.uniform(0.5, 2.0, size=4)
        base = time_source_norm(v, 0.3, w)
        assert time_source_norm(-3.0 * v, 0.3, w) == pytest.approx(3.0 * base, rel=1e-14)

    def test_positive_weights_required(self):
        with pytest.raises(ValueError):
            time_source_norm(np.ones((2, 2)), 0.1, [1.0, 0.0])


@pytest.fixture(scope="module")
def sensors():
    return make_circle_sensors(20, 4.0)


@pytest.fixture(scope="module")
def grid():
    return make_sampling_grid([[-2.6, 2.6]] * 2, [11, 11])


@pytest.fixture(scope="module")
def point_data(sensors):
    tg = TimeGrid(25.0, 96)
    return synth_point_model([[0.0, 0.0]], [1.0], sensors, sensors, tg, SPEC, MED, 3)


class TestProbeEngines:
    def test_backends_agree(self, point_data, grid):
        if not active_backend() == "numba":
            pytest.skip("numba backend unavailable")
        for kind in ("i1", "i3"):
            a = sweep(point_data, grid, kind, backend="numpy")
            b = sweep(point_data, grid, kind, backend="numba")
            scale = np.abs(a.values).max()
            assert np.abs(a.values - b.values).max() <= 1e-12 * scale

    def test_engine_against_literal_sums(self, point_data):
        # direct translation of the correlation norms, full lag range
        z = np.array([0.7, -0.4])
        u = point_data.values
        tg = point_data.tgrid
        w = point_data.sensors.weights
        from tdscat.greenfn import sample_point_response

        V = sample_point_response(
            point_data.sensors.points, point_data.sources.points, z, tg, SPEC, MED
        )
        nm, nt1, ni = u.shape
        nlag = 2 * nt1 - 1
        S = np.zeros((ni, nlag))
        for j in range(ni):
            for i in range(nm):
                # full cross-correlation, index m <-> lag m - (nt1 - 1)
                S[j] += w[i] * np.correlate(u[i, :, j], V[i, :, j], "full")
        n_uv_ref = np.sqrt(tg.dt**3 * np.einsum("jq,jq,j->", S, S, w))
        norms, _ = probe_norms(
            point_data.transposed(), z[None, :],
            point_data.sensors.points, point_data.sources.points,
            w, w, tg.nodes(), tg.dt,
            (SPEC.omega, SPEC.sigma, SPEC.t0, SPEC.causal_truncation), 1.0,
            want=("uv",),
        )
        assert norms[0, 0] == pytest.approx(n_uv_ref, rel=1e-12)


class TestIndicators:
    def test_unit_ratio_at_true_center(self, point_data):
        n_uu = data_self_norm(point_data)
        val = indicator_i1(point_data, [0.0, 0.0], n_uu=n_uu)
        assert val == pytest.approx(1.0, abs=1e-12)

    def test_scale_cancellation(self, point_data, sensors):
        scaled = synth_point_model(
            [[0.0, 0.0]], [7.5], sensors, sensors, point_data.tgrid, SPEC, MED, 3
        )
        assert indicator_i1(scaled, [0.0, 0.0]) == pytest.approx(1.0, abs=1e-12)

    def test_bounded_by_one_on_clean_point_data(self, point_data, grid):
        field = sweep(point_data, grid, "i1")
        assert field.values.max() <= 1.0 + 1e-6

    def test_argmax_at_scatterer(self, point_data, grid):
        for kind in ("i1", "i2", "i3"):
            field = sweep(point_data, grid, kind)
            assert np.linalg.norm(field.argmax_point) == 0.0

    def test_scale_invariance(self, point_data, grid):
        from dataclasses import replace

        scaled = replace(point_data, values=3.0 * point_data.values)
        for kind in ("i1", "i2"):
            a = sweep(point_data, grid, kind)
            b = sweep(scaled, grid, kind)
            assert np.abs(a.values - b.values).max() <= 1e-12 * np.abs(a.values).max()
        a3 = sweep(point_data, grid, "i3")
        b3 = sweep(scaled, grid, "i3")
        assert b3.argmax_index == a3.argmax_index
        assert np.allclose(b3.values, 3.0 * a3.values, rtol=1e-12)

    def test_shift_invariance_of_pulse_matched_indicators(self, point_data, grid):
        from dataclasses import replace

        shifted = np.zeros_like(point_data.values)
        shifted[:, 2:, :] = point_data.values[:, :-2, :]
        data_s = replace(point_data, values=shifted)
        for kind in ("i2", "i3"):
            a = sweep(point_data, grid, kind)
            b = sweep(data_s, grid, kind)
            assert np.abs(a.values - b.values).max() <= 1e-4 * np.abs(a.values).max()

    def test_zero_data_degenerate(self, point_data):
        from dataclasses import replace

        dead = replace(point_data, values=np.zeros_like(point_data.values))
        with pytest.raises(IndicatorError, match="degenerate"):
            indicator_i1(dead, [0.5, 0.5])
        assert indicator_i3(dead, [0.5, 0.5]) == 0.0

    def test_probe_on_sensor_flagged_zero(self, point_data, sensors):
        z = sensors.points[0]
        assert indicator_i1(point_data, z) == 0.0
        assert indicator_i3(point_data, z) == 0.0

    def test_noise_perturbs_values_mildly(self, point_data, grid):
        noisy = add_noise(point_data, NoiseSpec(0.05, 9))
        a = sweep(point_data, grid, "i3")
        b = sweep(noisy, grid, "i3")
        assert b.argmax_index == a.argmax_index


class TestSweepMachinery:
    def test_sweep_matches_single_probe_calls(self, point_data):
        g = make_sampling_grid([[-1.0, 1.0]] * 2, [3, 3])
        field = sweep(point_data, g, "i2")
        n_uu = data_self_norm(point_data)
        for idx in (0, 4, 8):
            direct = indicator_i2(point_data, g.points[idx], n_uu=n_uu)
            assert field.values[idx] == pytest.approx(direct, rel=1e-12)

    def test_order_independence_via_chunking(self, point_data, grid):
        a = sweep(point_data, grid, "i3", chunk_size=7)
        b = sweep(point_data, grid, "i3", chunk_size=441)
        assert np.array_equal(a.values, b.values)

    def test_workspace_reuse_identical(self, point_data, grid):
        ws = SweepWorkspace(grid, SweepWorkspace.key_of(point_data), 64)
        a = sweep(point_data, grid, "i2", workspace=ws)
        b = sweep(point_data, grid, "i2", workspace=ws)  # cached kernels path
        assert np.array_equal(a.values, b.values)
        assert ws.n_vv is not None

    def test_workspace_mismatch_rejected(self, point_data, grid, sensors):
        other = synth_point_model(
            [[0.0, 0.0]], [1.0], sensors, sensors, TimeGrid(20.0, 96), SPEC, MED, 3
        )
        ws = SweepWorkspace(grid, SweepWorkspace.key_of(point_data), 64)
        with pytest.raises(ValueError, match="workspace"):
            sweep(other, grid, "i2", workspace=ws)

    def test_unknown_indicator(self, point_data, grid):
        with pytest.raises(ValueError, match="unknown indicator"):
            sweep(point_data, grid, "i9")

    def test_metadata_fields(self, point_data, grid):
        field = sweep(point_data, grid, "i1")
        assert field.meta["argmax_index"] == field.argmax_index
        assert field.meta["value_max"] == field.values.max()
        assert "normalization" in field.meta


class TestReferenceVariant:
    def test_identity_at_true_center(self, point_data, sensors):
        def synthesize(z):
            return synth_point_model([z], [1.0], sensors, sensors, point_data.tgrid, SPEC, MED, 3)

        val = indicator_i1prime(point_data, [0.0, 0.0], synthesize)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_strictly_below_one_elsewhere_and_tracks_i1(self, point_data, sensors):
        def synthesize(z):
            return synth_point_model([z], [1.0], sensors, sensors, point_data.tgrid, SPEC, MED, 3)

        g = make_sampling_grid([[-0.52, 0.52]] * 2, [3, 3])
        n_uu = data_self_norm(point_data)
        for z in g.points:
            ref = indicator_i1prime(point_data, z, synthesize, n_uu=n_uu)
            base = indicator_i1(point_data, z, n_uu=n_uu)
            if np.linalg.norm(z) > 0:
                assert ref < 1.0
            assert abs(ref - base) <= 0.05

    def test_sweep_variant_requires_synthesizer(self, point_data):
        g = make_sampling_grid([[-0.5, 0.5]] * 2, [2, 2])
        with pytest.raises(ValueError, match="synthesizer"):
            sweep(point_data, g, "i1prime")


class TestLocalMaxima:
    def test_finds_separated_peaks(self):
        g = make_sampling_grid([[-2, 2]] * 2, [21, 21])
        xx = g.points[:, 0]
        yy = g.points[:, 1]
        v = np.exp(-8 * ((xx - 1) ** 2 + yy**2)) + 0.5 * np.exp(-8 * ((xx + 1) ** 2 + yy**2))
        from tdscat.indicator import IndicatorField

        field = IndicatorField(g, v, "i3")
        peaks = local_maxima(field, min_separation=0.5, count=2)
        assert np.allclose(peaks[0][0], [1, 0], atol=1e-12)
        assert np.allclose(peaks[1][0], [-1, 0], atol=1e-12)
