import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathest import (Deployment, GeometryError, PathParams, classify_mobility,
                     forward_path, locate_all, locate_reflector)
from pathest.localization import MOBILE, STATIC, TargetFix


DEP = Deployment(tx_pos=np.array([0.0, 0.0]), rx_pos=np.array([4.0, 0.0]))


def path_for(position, dep=DEP, doppler=0.0, atten=1.0):
    aoa, tof = forward_path(np.asarray(position, dtype=float), dep)
    return PathParams(aoa=aoa, aod=np.pi / 2, tof=tof, doppler=doppler,
                      atten=atten)


class TestForwardPath:
    def test_worked_example(self):
        # Target at (2, 2): range rx->target = sqrt(8), tx->target = sqrt(8).
        aoa, tof = forward_path(np.array([2.0, 2.0]), DEP)
        v = np.array([2.0, 2.0]) - np.array([4.0, 0.0])
        expect_aoa = np.arctan2(2.0, -2.0)
        assert aoa == pytest.approx(expect_aoa)
        assert np.degrees(aoa) == pytest.approx(135.0)
        assert tof == pytest.approx(2 * np.sqrt(8.0) / 299792458.0)
        assert tof * 1e9 == pytest.approx(18.869, abs=1e-3)

    def test_rejects_wrong_half_plane(self):
        with pytest.raises(GeometryError):
            forward_path(np.array([2.0, -1.0]), DEP)
        with pytest.raises(GeometryError):
            forward_path(DEP.rx_pos, DEP)

    def test_half_plane_flip(self):
        dep = Deployment(tx_pos=np.array([0.0, 0.0]),
                         rx_pos=np.array([4.0, 0.0]), half_plane=-1)
        aoa, _ = forward_path(np.array([2.0, -2.0]), dep)
        assert np.degrees(aoa) == pytest.approx(135.0)


class TestLocateReflector:
    def test_round_trip_worked_example(self):
        fix = locate_reflector(path_for([2.0, 2.0]), DEP)
        assert np.allclose(fix.position, [2.0, 2.0], atol=1e-9)
        assert fix.mobility == STATIC

    @given(x=st.floats(-5.0, 9.0), y=st.floats(0.3, 8.0))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, x, y):
        fix = locate_reflector(path_for([x, y]), DEP)
        assert np.allclose(fix.position, [x, y], atol=1e-6)

    def test_fix_lies_on_ellipse_and_ray(self):
        path = path_for([1.0, 3.0])
        fix = locate_reflector(path, DEP)
        s = DEP.c * path.tof
        total = (np.linalg.norm(fix.position - DEP.tx_pos)
                 + np.linalg.norm(fix.position - DEP.rx_pos))
        assert abs(total - s) < 1e-3  # path-length mismatch under 1 mm
        u = (fix.position - DEP.rx_pos)
        u = u / np.linalg.norm(u)
        assert np.allclose(u, DEP.ray(path.aoa), atol=1e-9)

    def test_direct_path_degenerate(self):
        direct = PathParams(aoa=np.pi - 1e-6, aod=np.pi / 2,
                            tof=DEP.direct_tof, doppler=0.0)
        with pytest.raises(GeometryError):
            locate_reflector(direct, DEP)

    def test_mobile_flag(self):
        fix = locate_reflector(path_for([2.0, 2.0], doppler=2.0), DEP)
        assert fix.mobility == MOBILE

    def test_to_dict_units(self):
        fix = locate_reflector(path_for([2.0, 2.0]), DEP, path_index=3)
        d = fix.to_dict()
        assert d["path_index"] == 3
        assert d["aoa_deg"] == pytest.approx(135.0)
        assert d["tof_ns"] == pytest.approx(18.869, abs=1e-3)
        assert np.allclose(d["position_m"], [2.0, 2.0], atol=1e-9)


class TestLocateAll:
    def test_direct_skipped_reflectors_located(self):
        direct = PathParams(aoa=2.6, aod=np.pi / 2, tof=DEP.direct_tof,
                            doppler=0.0, atten=2.0)
        p1 = path_for([2.0, 2.5], atten=1.0)
        p2 = path_for([5.0, 2.5], atten=0.5)
        result = locate_all([direct, p1, p2], DEP)
        assert len(result.fixes) == 2
        assert result.skipped == [(0, "direct path")]
        assert np.allclose(result.fixes[0].position, [2.0, 2.5], atol=1e-6)
        assert np.allclose(result.fixes[1].position, [5.0, 2.5], atol=1e-6)
        assert result.fixes[0].path_index == 1

    def test_inconsistent_path_skipped_with_reason(self):
        direct = PathParams(aoa=2.6, aod=np.pi / 2, tof=DEP.direct_tof,
                            doppler=0.0, atten=2.0)
        bogus = PathParams(aoa=1.0, aod=np.pi / 2, tof=DEP.direct_tof + 1e-13,
                           doppler=0.0, atten=0.1)
        # bogus arrives within the direct window; push it outside by tof
        bogus = bogus.replace(tof=DEP.direct_tof + 2e-9)
        result = locate_all([direct, bogus], DEP)
        assert len(result.fixes) == 1 or len(result.fixes) == 0
        reasons = dict(result.skipped)
        assert 0 in reasons

    def test_empty_report(self):
        result = locate_all([], DEP)
        assert result.fixes == [] and result.skipped == []

    def test_to_dict(self):
        result = locate_all([path_for([2.0, 2.0]),
                             path_for([1.0, 4.0])], DEP)
        d = result.to_dict()
        assert set(d) == {"fixes", "skipped"}
        assert all({"position_m", "mobility"} <= set(f) for f in d["fixes"])


class TestClassifyMobility:
    def test_flags(self):
        paths = [path_for([2.0, 2.0], doppler=0.1),
                 path_for([3.0, 3.0], doppler=2.0),
                 path_for([1.0, 1.0], doppler=-0.9)]
        assert classify_mobility(paths) == [STATIC, MOBILE, MOBILE]

    def test_custom_floor(self):
        paths = [path_for([2.0, 2.0], doppler=0.3)]
        assert classify_mobility(paths, doppler_floor=0.2) == [MOBILE]
        assert classify_mobility(paths, doppler_floor=0.4) == [STATIC]


class TestDeployment:
    def test_validation(self):
        with pytest.raises(ValueError):
            Deployment(tx_pos=np.zeros(2), rx_pos=np.ones(2), half_plane=0)
        with pytest.raises(ValueError):
            Deployment(tx_pos=np.zeros(2), rx_pos=np.ones(2),
                       rx_array_axis=np.zeros(2))
        with pytest.raises(ValueError):
            Deployment(tx_pos=np.zeros(2), rx_pos=np.ones(2), c=-1.0)

    def test_baseline_and_direct(self):
        assert DEP.baseline == pytest.approx(4.0)
        assert DEP.direct_tof == pytest.approx(4.0 / 299792458.0)

    def test_ray_broadside(self):
        ray = DEP.ray(np.pi / 2)
        assert np.allclose(ray, [0.0, 1.0], atol=1e-12)

    def test_save_load(self, tmp_path):
        dep = Deployment(tx_pos=np.array([1.0, 2.0]),
                         rx_pos=np.array([5.0, -1.0]),
                         rx_array_axis=np.array([0.0, 2.0]), half_plane=-1)
        f = tmp_path / "dep.json"
        dep.save(str(f))
        back = Deployment.load(str(f))
        assert np.allclose(back.tx_pos, dep.tx_pos)
        assert np.allclose(back.rx_pos, dep.rx_pos)
        assert np.allclose(back.rx_array_axis, [0.0, 1.0])
        assert back.half_plane == -1
