import numpy as np
import pytest

from pathest import (BASIC_RES, BenchSpec, ResolvabilitySpec, Scenario,
                     cable_pair_scenario, case_study_scenario,
                     diagonal_threshold, doppler_scenario,
                     measure_cd_grid_speedup, random_ensemble,
                     reflector_scenario, run_resolvability, two_path_scenario)
from pathest.experiments import (CASE_STUDY_STRONG, CASE_STUDY_WEAK,
                                 ITERATION_BUDGETS, _resolvability_cell)
from pathest.localization import forward_path


class TestScenarioBuilders:
    def test_case_study_paths(self):
        scen = case_study_scenario()
        assert len(scen.paths) == 2
        strong, weak = scen.paths
        assert strong.aoa == pytest.approx(CASE_STUDY_STRONG[0])
        assert strong.tof == pytest.approx(20.8e-9)
        assert weak.tof == pytest.approx(28.1e-9)
        # 10 dB power gap
        gap = 20 * np.log10(abs(strong.atten) / abs(weak.atten))
        assert gap == pytest.approx(10.0)
        assert scen.snr_db is None

    def test_observe_noiseless_equals_clean(self):
        scen = case_study_scenario()
        a = scen.observe(seed=1)
        assert np.array_equal(a.data, scen.clean().data)

    def test_observe_noisy_seeded(self):
        scen = case_study_scenario(snr_db=15.0)
        a = scen.observe(rng=np.random.default_rng(4))
        b = scen.observe(rng=np.random.default_rng(4))
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, scen.clean().data)

    def test_two_path_scenario_separations(self):
        scen = two_path_scenario(0.5, 0.8, aod_mult=0.2, doppler_mult=1.0)
        lo, hi = scen.paths
        assert hi.aoa - lo.aoa == pytest.approx(0.5 * BASIC_RES["aoa"])
        assert hi.tof - lo.tof == pytest.approx(0.8 * BASIC_RES["tof"])
        assert hi.aod - lo.aod == pytest.approx(0.2 * BASIC_RES["aod"])
        assert hi.doppler - lo.doppler == pytest.approx(1.0)
        assert (lo.aoa + hi.aoa) / 2 == pytest.approx(np.pi / 2)

    def test_random_ensemble_min_sep(self):
        scen = random_ensemble(6, seed=3, min_sep=1.0)
        assert len(scen.paths) == 6
        for a in range(6):
            for b in range(a + 1, 6):
                pa, pb = scen.paths[a], scen.paths[b]
                seps = (abs(pa.aoa - pb.aoa) / BASIC_RES["aoa"],
                        abs(pa.aod - pb.aod) / BASIC_RES["aod"],
                        abs(pa.tof - pb.tof) / BASIC_RES["tof"],
                        abs(pa.doppler - pb.doppler) / BASIC_RES["doppler"])
                assert max(seps) >= 1.0

    def test_random_ensemble_deterministic(self):
        assert random_ensemble(4, seed=9).paths == random_ensemble(4, seed=9).paths

    def test_cable_pair_fixed_tof_gap(self):
        scen, profile = cable_pair_scenario(seed=11)
        t1, t2 = (p.tof for p in scen.paths)
        assert t2 - t1 == pytest.approx(18.2e-9)
        assert profile.common_delay > 0
        assert profile.snapshot_slopes is not None

    def test_doppler_scenario_contract(self):
        scen, cfo, coarse, mobile = doppler_scenario()
        assert cfo == 300.4 and coarse == 300.0
        assert mobile == [False, False, False, True]
        assert scen.paths[3].doppler == pytest.approx(2.0)
        assert all(p.doppler == 0.0 for i, p in enumerate(scen.paths)
                   if not mobile[i])
        assert scen.grid.sample_interval == 25e-3
        assert scen.grid.n_time == 40

    def test_reflector_scenario_consistent_geometry(self):
        scen, dep, targets = reflector_scenario()
        assert np.linalg.norm(targets[0] - targets[1]) == pytest.approx(3.0)
        # Paths 1 and 2 must agree with the forward geometry of the targets.
        for path, pos in zip(scen.paths[1:], targets):
            aoa, tof = forward_path(pos, dep)
            assert path.aoa == pytest.approx(aoa)
            assert path.tof == pytest.approx(tof)
        assert scen.paths[0].tof == pytest.approx(dep.direct_tof)


class TestResolvabilityPieces:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ResolvabilitySpec(n_trials=0)
        with pytest.raises(ValueError):
            ResolvabilitySpec(methods=("music", "5d"))

    def test_cell_deterministic(self):
        spec = ResolvabilitySpec(multiples=(0.2, 0.9), n_trials=5, seed=7,
                                 methods=("music", "2d"))
        a = _resolvability_cell(spec, 1, 1)
        b = _resolvability_cell(spec, 1, 1)
        assert a == b

    def test_wide_cell_resolves_narrow_cell_fails(self):
        spec = ResolvabilitySpec(multiples=(0.1, 1.0), n_trials=8, seed=5,
                                 methods=("2d",))
        _, _, wide = _resolvability_cell(spec, 1, 1)
        _, _, narrow = _resolvability_cell(spec, 0, 0)
        assert wide["2d"] >= 6
        assert narrow["2d"] < wide["2d"]

    def test_run_resolvability_tiny(self):
        spec = ResolvabilitySpec(multiples=(0.2, 1.0), n_trials=4, seed=2,
                                 methods=("music", "2d"))
        res = run_resolvability(spec)
        assert set(res.surfaces) == {"music", "2d"}
        for s in res.surfaces.values():
            assert s.shape == (2, 2)
            assert np.all((0.0 <= s) & (s <= 1.0))
        assert set(res.thresholds) == {"music", "2d"}
        d = res.to_dict()
        assert d["multiples"] == [0.2, 1.0]
        assert len(d["surfaces"]["2d"]) == 2

    def test_diagonal_threshold(self):
        mult = (0.1, 0.2, 0.3, 0.4)
        surface = np.zeros((4, 4))
        surface[2:, 2:] = 1.0
        assert diagonal_threshold(surface, mult) == pytest.approx(0.3)
        assert diagonal_threshold(np.zeros((4, 4)), mult) == pytest.approx(1.05)
        assert diagonal_threshold(np.ones((4, 4)), mult) == pytest.approx(0.1)


class TestBench:
    def test_iteration_budgets(self):
        assert ITERATION_BUDGETS == {3: 4, 10: 9}
        assert set(BenchSpec().path_counts) >= {3, 10}

    def test_speedup_report(self):
        rep = measure_cd_grid_speedup(seed=1, repeats=1)
        assert set(rep) == {"pointwise", "vectorized", "grid_points"}
        assert rep["grid_points"] > 10_000
        assert rep["pointwise"] > 10.0
        assert rep["vectorized"] > 0.0
