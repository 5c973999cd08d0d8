import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from activemocap.geometry import CameraModel, MavPose, SphericalCoord
from activemocap.potential import Obstacle
from activemocap.sensing import (
    CartesianMeasurement,
    CompactCovModel,
    NoiseModel,
    SphericalMeasurement,
    compact_covariance,
    convert_measurement,
    fit_compact_model,
    noise_variances,
    synth_detect,
    to_world,
    trace_cov,
)
from oracles import linearized_cov, sample_conversion


def _meas(r, theta, phi, model=NoiseModel()):
    vr, vt, vp = noise_variances(model, r)
    return SphericalMeasurement(SphericalCoord(r, theta, phi), vr, vt, vp)


@pytest.mark.parametrize("r,theta,phi", [(8.0, math.pi / 2, 0.0), (12.0, 1.1, -0.5), (5.0, 2.2, 0.7)])
def test_conversion_matches_monte_carlo(r, theta, phi):
    m = _meas(r, theta, phi)
    mean, cov = sample_conversion(r, theta, phi, m.var_r, m.var_theta, m.var_phi, n=100_000, seed=3)
    c = convert_measurement(m)
    err = np.linalg.norm(c.cov - cov) / np.linalg.norm(cov)
    assert err < 0.05
    np.testing.assert_allclose(c.mean, spherical_to_cartesian_debiased(r, theta, phi, m), rtol=1e-12)


def spherical_to_cartesian_debiased(r, theta, phi, m):
    lt, lp = math.exp(-m.var_theta / 2), math.exp(-m.var_phi / 2)
    return np.array([
        r * math.sin(theta) * math.cos(phi) / (lt * lp),
        r * math.sin(theta) * math.sin(phi) / (lt * lp),
        r * math.cos(theta) / lt,
    ])


def test_debiased_mean_is_unbiased_over_noise():
    # average the converted mean over many noisy draws of one true point
    rng = np.random.default_rng(1)
    model = NoiseModel(c1=0.01, c2=0.02, c3=0.02)
    r0, t0, p0 = 10.0, 1.3, 0.4
    vr, vt, vp = noise_variances(model, r0)
    n = 200_000
    rr = r0 + math.sqrt(vr) * rng.standard_normal(n)
    tt = t0 + math.sqrt(vt) * rng.standard_normal(n)
    pp = p0 + math.sqrt(vp) * rng.standard_normal(n)
    lt, lp = math.exp(-vt / 2), math.exp(-vp / 2)
    conv = np.stack([rr * np.sin(tt) * np.cos(pp) / (lt * lp), rr * np.sin(tt) * np.sin(pp) / (lt * lp), rr * np.cos(tt) / lt], 1)
    naive = np.stack([rr * np.sin(tt) * np.cos(pp), rr * np.sin(tt) * np.sin(pp), rr * np.cos(tt)], 1)
    truth = np.array([r0 * math.sin(t0) * math.cos(p0), r0 * math.sin(t0) * math.sin(p0), r0 * math.cos(t0)])
    assert np.linalg.norm(conv.mean(0) - truth) < 0.25 * np.linalg.norm(naive.mean(0) - truth)


def test_small_noise_reduces_to_linearization():
    m = SphericalMeasurement(SphericalCoord(9.0, 1.2, 0.3), 1e-6, 1e-8, 1e-8)
    c = convert_measurement(m)
    ref = linearized_cov(9.0, 1.2, 0.3, 1e-6, 1e-8, 1e-8)
    assert np.linalg.norm(c.cov - ref) / np.linalg.norm(ref) < 1e-3


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0, 30.0), st.floats(0.1, math.pi - 0.1), st.floats(-3.0, 3.0))
def test_converted_covariance_is_psd(r, theta, phi):
    c = convert_measurement(_meas(r, theta, phi))
    assert np.allclose(c.cov, c.cov.T)
    assert np.linalg.eigvalsh(c.cov)[0] > -1e-12 * np.trace(c.cov)


def test_compact_model_diagonal_at_boresight():
    m = _meas(8.0, math.pi / 2, 0.0)
    cov = convert_measurement(m).cov
    off = np.abs(cov - np.diag(np.diag(cov))).max()
    assert off < 0.01 * np.diag(cov).max()


def test_trace_scales_quadratically_with_range():
    t8 = np.trace(convert_measurement(_meas(8.0, math.pi / 2, 0.0)).cov)
    t16 = np.trace(convert_measurement(_meas(16.0, math.pi / 2, 0.0)).cov)
    assert t16 / t8 == pytest.approx(4.0, rel=0.02)


def test_compact_helpers():
    m = CompactCovModel(0.5, 0.25, 0.25)
    assert m.kappa == 1.0
    assert trace_cov(m, 1.0) == 1.0
    assert trace_cov(CompactCovModel(1.0, 1.0, 1.0), 2.0) == 12.0
    assert trace_cov(m, 16.0) / trace_cov(m, 8.0) == 4.0
    np.testing.assert_allclose(np.trace(compact_covariance(CompactCovModel(0.1, 0.2, 0.3), 3.0)), 0.6 * 9)
    with pytest.raises(ValueError):
        trace_cov(m, 0.0)
    with pytest.raises(ValueError):
        CompactCovModel(-1.0, 0.1, 0.1)


def test_fitted_kappa_reproduces_full_trace():
    model = NoiseModel()
    fit = fit_compact_model(model)
    for r in (6.0, 11.3):
        full = np.trace(convert_measurement(_meas(r, math.pi / 2, 0.0, model)).cov)
        assert trace_cov(fit, r) == pytest.approx(full, rel=0.01)


def test_noise_variances():
    vr, vt, vp = noise_variances(NoiseModel(c1=0.01, c2=0.02, c3=0.03), 10.0)
    assert (vr, vt, vp) == pytest.approx((1.0, 0.03, 0.02))
    with pytest.raises(ValueError):
        noise_variances(NoiseModel(), -1.0)


def _pose_facing_origin():
    return MavPose(np.array([-8.0, 0.0, 8.0]), yaw=0.0)


def test_synth_detect_noise_free_and_out_of_view():
    cam = CameraModel()
    m = synth_detect(np.zeros(3), _pose_facing_origin(), cam, NoiseModel())
    assert m is not None and m.coord.r == pytest.approx(math.hypot(8, 8))
    behind = MavPose(np.array([-8.0, 0.0, 8.0]), yaw=math.pi)
    assert synth_detect(np.zeros(3), behind, cam, NoiseModel()) is None


def test_synth_detect_occlusion():
    tree = Obstacle((-4.0, 0.0, 0.0), 0.5, height=12.0)
    assert synth_detect(np.zeros(3), _pose_facing_origin(), CameraModel(), NoiseModel(), [tree]) is None
    short = Obstacle((-4.0, 0.0, 0.0), 0.5, height=1.0)
    assert synth_detect(np.zeros(3), _pose_facing_origin(), CameraModel(), NoiseModel(), [short]) is not None


def test_synth_detect_is_seeded():
    cam, pose = CameraModel(), _pose_facing_origin()
    a = synth_detect(np.zeros(3), pose, cam, NoiseModel(), rng=np.random.default_rng(5))
    b = synth_detect(np.zeros(3), pose, cam, NoiseModel(), rng=np.random.default_rng(5))
    assert a == b


def test_to_world_recovers_position_and_adds_self_cov():
    cam, pose = CameraModel(), _pose_facing_origin()
    z = convert_measurement(synth_detect(np.zeros(3), pose, cam, NoiseModel()))
    w = to_world(z, pose, cam, np.eye(6) * 0.5)
    assert np.linalg.norm(w.mean) < 0.05
    w0 = to_world(z, pose, cam)
    np.testing.assert_allclose(w.cov - w0.cov, 0.5 * np.eye(3), atol=1e-12)
    assert isinstance(w, CartesianMeasurement)
