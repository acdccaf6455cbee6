import json
from dataclasses import replace

import numpy as np
import pytest

from unreduce import groups
from unreduce.bundle import QuasiState
from unreduce.errors import CapabilityError, ConditioningError, UnknownSystemError, ValidationError
from unreduce.integrate import integrate
from unreduce.sode import TotalSODE, eval_sode
from unreduce.systems import (
    SYSTEM_IDS,
    check_registration,
    curvature_distortion,
    get_system,
    make_canonical_spray,
    make_glplus,
    make_wong_so3,
)

WONG = get_system("wong-so3")
SPRAY = WONG.extras["wong_spray"]
CHART = WONG.chart
METRIC = WONG.lagrangian.base_metric


def test_registry_ids_and_descriptors():
    assert SYSTEM_IDS == ("so3-sphere", "wong-so3", "glplus-2", "glplus-3", "canonical-so3", "flat-product")
    for system_id in SYSTEM_IDS:
        d = get_system(system_id).descriptor()
        assert d["id"] == system_id
        assert d["coord_dim"] == len(d["coord_names"])
        assert len(d["velocity_names"]) == d["base_dim"] + d["fiber_dim"]
        json.dumps(d)
    assert get_system("glplus-3").descriptor()["fiber_dim"] == 8


def test_unknown_system():
    with pytest.raises(UnknownSystemError):
        get_system("so4-sphere")


def test_unknown_selector():
    with pytest.raises(ValidationError):
        get_system("so3-sphere").sode("wong_spray")


def test_registration_detects_tampered_primary():
    system = get_system("so3-sphere")
    fake = TotalSODE(system.chart, lambda x, vb, vv: system.primary.F_base(x, vb, vv) * 1.0000001, system.primary.F_vert, kind="primary")
    with pytest.raises(ValidationError):
        check_registration(replace(system, primary=fake))


def test_wong_coefficient_at_equator():
    d = eval_sode(SPRAY, QuasiState([0, np.pi / 2, 0], [0, 1], [2]))
    assert d.vdot_base[0] == pytest.approx(-2.0, abs=1e-15)
    assert d.vdot_vert[0] == 0.0


def test_wong_equals_primary_on_horizontal_states():
    for s in WONG.samples(30, 1):
        h = QuasiState(s.x, s.v_base, [0.0])
        np.testing.assert_allclose(eval_sode(SPRAY, h).as_vector(), eval_sode(WONG.primary, h).as_vector(), rtol=1e-15, atol=1e-15)


def test_wong_minus_primary_at_quarter_pi():
    s = QuasiState([0, np.pi / 4, 0], [1.0, 1.0], [1.0])
    diff = eval_sode(SPRAY, s).vdot_base - eval_sode(WONG.primary, s).vdot_base
    np.testing.assert_allclose(diff, [-np.sqrt(2) / 2, np.sqrt(2)], atol=1e-15)


def test_curvature_distortion_examples():
    A = curvature_distortion(CHART, METRIC, 1.0, QuasiState([0, np.pi / 2, 0], [0, 1], [2]))
    np.testing.assert_allclose(A, [-2.0, 0.0], atol=1e-15)
    assert not np.any(curvature_distortion(CHART, METRIC, 1.0, QuasiState([0, 1.0, 0], [0.3, 1], [0])))
    flat = get_system("flat-product")
    assert not np.any(curvature_distortion(flat.chart, lambda x: np.eye(2), 1.0, QuasiState([0, 1, 2], [1, 1], [3])))


def test_curvature_distortion_scales_linearly_in_B():
    s = QuasiState([0.2, 1.1, -0.3], [0.4, 0.7], [1.5])
    a1 = curvature_distortion(CHART, METRIC, 1.0, s)
    np.testing.assert_allclose(curvature_distortion(CHART, METRIC, 3.0, s), 3.0 * a1, rtol=1e-15)


def test_curvature_distortion_singular_metric():
    with pytest.raises(ConditioningError):
        curvature_distortion(CHART, lambda x: np.zeros((2, 2)), 1.0, QuasiState([0, 1.0, 0], [1, 1], [1]))


def test_wong_rejects_nonpositive_coupling():
    for B in (0.0, -1.0):
        with pytest.raises(ValidationError):
            make_wong_so3(B)


def test_glplus_rejects_small_n():
    with pytest.raises(ValidationError):
        make_glplus(1)


@pytest.mark.parametrize("system_id", ["glplus-2", "glplus-3"])
def test_glplus_canonical_spray_matches_primary(system_id):
    # The extra is derived from d/dt(A^-1 Adot) = 0, independently of the un-reduction.
    system = get_system(system_id)
    canonical = system.extras["canonical"]
    for s in system.samples(50, 3):
        a, b = eval_sode(canonical, s), eval_sode(system.primary, s)
        scale = max(1.0, float(np.max(np.abs(b.vdot_base))))
        np.testing.assert_allclose(a.vdot_base, b.vdot_base, atol=1e-11 * scale)
        np.testing.assert_allclose(a.vdot_vert, 0.0, atol=1e-11 * scale)


def test_glplus_horizontal_lift_direction():
    # The lift of lambda at A is (lambda / (n det A)) A.
    system = get_system("glplus-3")
    A = system.samples(1, 4)[0].x.reshape(3, 3)
    lam = 0.8
    xdot = system.chart.frame(A.ravel())[:, 0] * lam
    np.testing.assert_allclose(xdot, (lam / (3 * np.linalg.det(A))) * A.ravel(), rtol=1e-13)


def test_canonical_spray_coefficients_vanish():
    system = get_system("canonical-so3")
    for s in system.samples(20, 0):
        d = eval_sode(system.primary, s)
        assert d.vdot_base.shape == (0,) and not np.any(d.vdot_vert)


def test_canonical_spray_needs_realization():
    with pytest.raises(CapabilityError):
        make_canonical_spray(groups.abelian(("a",)))


def test_canonical_spray_on_positive_reals():
    spray = make_canonical_spray(groups.positive_reals())
    x0, zeta = 1.5, 0.8
    traj = integrate(spray, QuasiState([x0], [], [zeta]), 1.0, 1e-3)
    np.testing.assert_allclose(traj.x[:, 0], x0 * np.exp(zeta * traj.times), rtol=1e-12)


def test_canonical_spray_zero_velocity_is_constant():
    system = get_system("canonical-so3")
    s0 = QuasiState(groups.rodrigues([0.1, 0.2, 0.3]).ravel(), [], [0, 0, 0])
    traj = integrate(system.primary, s0, 1.0, 1e-2)
    assert np.all(traj.x == s0.x)


@pytest.mark.parametrize("system_id", SYSTEM_IDS)
def test_sampler_is_seeded_and_in_domain(system_id):
    system = get_system(system_id)
    a, b = system.samples(5, 99), system.samples(5, 99)
    for s, t in zip(a, b):
        np.testing.assert_array_equal(s.as_vector(), t.as_vector())
        system.chart.check_domain(s.x)


def test_sphere_sampler_avoids_polar_geodesics():
    system = get_system("so3-sphere")
    for s in system.samples(200, 5):
        th = s.x[1]
        v1, v2 = s.v_base
        closest = abs(np.sin(th) ** 2 * v2) / np.hypot(v1, np.sin(th) * v2)
        assert closest > np.sin(0.05)


@pytest.mark.parametrize("system_id", [i for i in SYSTEM_IDS if get_system(i).exact is not None])
def test_exact_solutions_are_primary_flows(system_id):
    system = get_system(system_id)
    s0 = system.samples(1, 8)[0]
    traj = integrate(system.primary, s0, 0.5, 1e-3)
    exact = np.array([system.exact(s0, t).as_vector() for t in traj.times])
    np.testing.assert_allclose(traj.stacked(), exact, atol=1e-9)
