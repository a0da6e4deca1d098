import numpy as np
import pytest
from scipy import stats

from iccl import kernels
from iccl import propagation as prop
from iccl.errors import InvalidArgument
from iccl.propagation import ChannelModel, CsiDataset
from iccl.scene import Building, Scene

from oracles import marched_lengths, random_segments_near_boxes

BOX = Building((0.0, 0.0, 0.0), (10.0, 10.0, 10.0), 1.0)


class TestChannelModel:
    def test_pilot_energy_from_dbm(self):
        cm = ChannelModel()
        assert cm.pilot_energy == pytest.approx(10.0)  # 10 symbols at 1 W
        assert ChannelModel(tx_power_dbm=20, n_pilot_symbols=4).pilot_energy == pytest.approx(0.4)

    @pytest.mark.parametrize("kw", [{"pathloss_exponent": 0}, {"noise_power": -1}, {"n_pilot_symbols": 0}])
    def test_invariants(self, kw):
        with pytest.raises(InvalidArgument):
            ChannelModel(**kw)

    def test_unit_helpers(self):
        assert prop.watts_to_dbm(1.0) == pytest.approx(30.0)
        assert prop.dbm_to_watts(0.0) == pytest.approx(1e-3)

    def test_snr_reference(self):
        cm = ChannelModel()
        sigma2 = prop.noise_power_for_snr(cm, 20.0, 40.0)
        g = cm.free_space_gain(40.0)
        assert g / (sigma2 / cm.pilot_energy) == pytest.approx(100.0)


class TestRayBox:
    def test_inside_segment(self):
        assert prop.ray_box_interior_length((1, 1, 1), (9, 9, 9), BOX) == pytest.approx(np.sqrt(3) * 8)

    def test_crossing(self):
        assert prop.ray_box_interior_length((-5, 5, 5), (15, 5, 5), BOX) == pytest.approx(10.0)

    @pytest.mark.parametrize("p0,p1", [((0, 0, 5), (10, 0, 5)), ((-5, 10, 5), (15, 10, 5)),
                                        ((-5, 5, 10), (15, 5, 10)), ((10, -5, 0), (10, 15, 0))])
    def test_face_is_not_interior(self, p0, p1):
        assert prop.ray_box_interior_length(p0, p1, BOX) == 0.0

    def test_corner_graze(self):
        assert prop.ray_box_interior_length((-1, 11, 5), (11, -1, 5), BOX) > 0
        assert prop.ray_box_interior_length((-1, 21, 5), (21, -1, 5), BOX) == 0.0

    def test_disjoint_and_degenerate(self):
        assert prop.ray_box_interior_length((20, 20, 20), (30, 30, 30), BOX) == 0.0
        assert prop.ray_box_interior_length((5, 5, 5), (5, 5, 5), BOX) == 0.0

    def test_stops_at_endpoint(self):
        assert prop.ray_box_interior_length((-5, 5, 5), (4, 5, 5), BOX) == pytest.approx(4.0)

    def test_against_marching_oracle(self, rng):
        p0, p1, lo, hi = random_segments_near_boxes(rng, 300)
        got = np.array([kernels.segment_box_lengths(p0[i:i + 1], p1[i:i + 1], lo[i:i + 1], hi[i:i + 1])[0, 0]
                        for i in range(300)])
        ref = marched_lengths(p0, p1, lo, hi, 100_000)
        assert np.max(np.abs(got - ref)) < 1e-2
        assert np.mean(got > 0) > 0.4


class TestGain:
    def test_free_space_plug_in(self, empty_scene):
        g = prop.true_gain(empty_scene, ChannelModel(), (0, 0, 0), (10, 0, 0))
        assert g == pytest.approx(1e-6, rel=1e-12)

    def test_ten_meters_of_wall(self):
        wall = Scene((100, 80), (Building((40, 0, 0), (50, 80, 30), 1.0),))
        empty = Scene((100, 80))
        a = prop.true_gain(wall, ChannelModel(), (20, 40, 1), (70, 40, 1))
        b = prop.true_gain(empty, ChannelModel(), (20, 40, 1), (70, 40, 1))
        assert 10 * np.log10(b / a) == pytest.approx(10.0, abs=1e-9)

    def test_grazing_equals_free_space(self):
        s = Scene((100, 80), (Building((40, 40, 0), (50, 50, 30), 2.0),))
        e = Scene((100, 80))
        assert prop.true_gain(s, ChannelModel(), (20, 40, 5), (70, 40, 5)) == \
            prop.true_gain(e, ChannelModel(), (20, 40, 5), (70, 40, 5))

    def test_singular(self, empty_scene):
        with pytest.raises(InvalidArgument):
            prop.true_gain(empty_scene, ChannelModel(), (1, 1, 1), (1, 1, 1))

    def test_monotone_in_distance(self, empty_scene):
        d = np.linspace(0.5, 500, 400)
        wp = np.column_stack([d, np.zeros_like(d), np.zeros_like(d)])
        g = prop.gain_matrix(empty_scene, ChannelModel(), np.zeros((1, 3)), wp)[0]
        assert np.all(np.diff(g) < 0)

    def test_obstruction_never_helps(self, rng, city, empty_scene, small_trajectory):
        nodes = rng.uniform((0, 0), (100, 80), (60, 2))
        cm = ChannelModel()
        g_city = prop.gain_matrix(city, cm, nodes, small_trajectory.waypoints)
        g_free = prop.gain_matrix(empty_scene, cm, nodes, small_trajectory.waypoints)
        assert np.all(g_city <= g_free)
        fewer = Scene(city.area_extent, city.buildings[:4])
        assert np.all(g_city <= prop.gain_matrix(fewer, cm, nodes, small_trajectory.waypoints))


class TestMeasurement:
    def test_noiseless_is_exact(self, city, small_trajectory):
        cm = ChannelModel()
        g = prop.gain_matrix(city, cm, [(5.0, 5.0)], small_trajectory.waypoints)[0]
        np.testing.assert_array_equal(prop.measure_csi(city, cm, small_trajectory, (5.0, 5.0), 0), g)

    def test_mean_within_three_standard_errors(self):
        g, cm = 2e-7, ChannelModel(noise_power=5e-6)
        var = cm.estimate_noise_var
        s = prop.apply_measurement_noise(np.full(100_000, g), var, prop.draw_measurement_noise(0, (100_000,)))
        se = s.std(ddof=1) / np.sqrt(s.size)
        assert abs(s.mean() - (g + var)) < 3 * se
        assert np.all(s >= 0)

    def test_deterministic(self, city, small_trajectory):
        cm = ChannelModel(noise_power=1e-8)
        a = prop.measure_csi(city, cm, small_trajectory, (5.0, 5.0), 11)
        b = prop.measure_csi(city, cm, small_trajectory, (5.0, 5.0), 11)
        np.testing.assert_array_equal(a, b)

    def test_ls_estimator_identities(self, rng):
        x = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        h = 0.3 - 0.7j
        assert abs(prop.ls_channel_estimate(x, h * x) - h) < 1e-14
        w = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        assert abs(prop.ls_channel_estimate(np.ones(10), 1 + w) - (1 + w.mean())) < 1e-14
        with pytest.raises(InvalidArgument):
            prop.ls_channel_estimate(np.zeros(4), np.ones(4))

    def test_ls_estimator_variance(self, rng):
        cm = ChannelModel(noise_power=0.3)
        x = prop.qpsk_pilot(cm, rng)
        n = 100_000
        w = np.sqrt(cm.noise_power / 2) * (rng.standard_normal((n, x.size)) + 1j * rng.standard_normal((n, x.size)))
        err = (w @ x.conj()) / np.vdot(x, x).real
        target = cm.noise_power / np.vdot(x, x).real
        # sample variance of |err|^2-type: E|err|^2 has SE = target/sqrt(n) for exponential |err|^2
        assert abs(np.mean(np.abs(err) ** 2) - target) < 3 * target / np.sqrt(n)

    def test_pilot_simulation_matches_direct_draws(self):
        g, cm = 1e-6, ChannelModel(noise_power=5e-6)
        a = prop.simulate_pilot_csi(g, cm, 10_000, 1)
        b = prop.apply_measurement_noise(np.full(10_000, g), cm.estimate_noise_var,
                                         prop.draw_measurement_noise(2, (10_000,)))
        assert stats.ks_2samp(a, b).pvalue > 0.01


class TestDatasets:
    def test_generate(self, city, small_trajectory):
        ds = prop.generate_dataset(city, ChannelModel(), small_trajectory, 50, 4)
        assert ds.gains.shape == (50, 24) and ds.positions.shape == (50, 2)
        assert ds.scene_hash == city.digest()
        again = prop.generate_dataset(city, ChannelModel(), small_trajectory, 50, 4)
        np.testing.assert_array_equal(ds.gains, again.gains)

    @pytest.mark.parametrize("suffix", [".csv", ".bin"])
    def test_round_trip(self, tmp_path, city, small_trajectory, suffix):
        ds = prop.generate_dataset(city, ChannelModel(noise_power=1e-9), small_trajectory, 20, 4)
        path = tmp_path / f"d{suffix}"
        prop.write_dataset(path, ds)
        back = prop.read_dataset(path)
        np.testing.assert_array_equal(back.gains, ds.gains)
        np.testing.assert_array_equal(back.positions, ds.positions)
        assert back.noise_power == ds.noise_power and back.scene_hash == ds.scene_hash

    def test_binary_layout(self, tmp_path):
        ds = CsiDataset(np.array([[1.0, 2.0]]), np.array([[3.0, 4.0, 5.0]]))
        path = tmp_path / "d.bin"
        prop.write_dataset(path, ds)
        raw = path.read_bytes()
        assert raw[:8] == b"ICCLCSI1"
        assert len(raw) == 8 + 4 + 4 + 32 + 8 + 5 * 8
        assert np.frombuffer(raw[-40:], "<f8").tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]

    def test_invalid(self):
        with pytest.raises(InvalidArgument):
            CsiDataset(np.zeros((2, 2)), -np.ones((2, 3)))
        with pytest.raises(InvalidArgument):
            CsiDataset(np.zeros((2, 2)), np.ones((3, 3)))
