import numpy as np
import pytest

import sai


def small_scene(density=0.3, count=8):
    cfg = sai.sim.SceneConfig()
    cfg.density = density
    cfg.seed = 1
    cfg.reference = sai.Intrinsics.centered(160, 120, 125.0)
    scene = sai.sim.generate_scene(cfg)
    spec = sai.sim.TrajectorySpec()
    spec.count = count
    poses = sai.sim.generate_trajectory(spec)
    session = sai.sim.render_views(scene, poses, cfg.reference)
    return cfg, scene, session


def test_plane_apex_at_depth():
    s = sai.FocalSurfaceParams.plane(5.0)
    assert s.z + s.sz == pytest.approx(5.0)
    hit = sai.intersect_surface(np.zeros(3), np.array([0.0, 0.0, 1.0]), s)
    assert hit is not None
    assert hit[2] == pytest.approx(5.0)


def test_projection_roundtrip():
    k = sai.Intrinsics.centered(64, 48, 50.0)
    pose = np.eye(4)
    pose[0, 3] = 0.1
    u, v, depth = sai.project_point(np.array([0.3, -0.2, 4.0]), pose, k)
    origin, direction = sai.pixel_ray(k, pose, u, v)
    p = origin + direction * (depth / direction[2])
    np.testing.assert_allclose(p, [0.3, -0.2, 4.0], atol=1e-9)


def test_identical_captures_average_to_themselves():
    k = sai.Intrinsics.centered(32, 24, 30.0)
    rng = np.random.default_rng(0)
    img = rng.random((24, 32, 3), dtype=np.float32)
    session = sai.CaptureSession()
    for _ in range(3):
        session.add(img, np.eye(4), k)
    assert len(session) == 3 and session.channels == 3
    out = sai.render_integral(session, k, np.eye(4), sai.FocalSurfaceParams.plane(5.0))
    assert out.color.shape == (24, 32, 3)
    assert out.coverage.shape == (24, 32)
    np.testing.assert_allclose(out.color, img, atol=1e-5)


def test_masking_helpers():
    rgb = np.zeros((2, 2, 3), dtype=np.float32)
    rgb[..., 1] = 1.0
    np.testing.assert_allclose(sai.compute_vdvi(rgb), 1.0)
    cfg = sai.MaskConfig.around(sai.MaskSource.VDVI, 0.115)
    assert (cfg.lb, cfg.ub) == pytest.approx((0.065, 0.165))
    assert sai.alpha_from_mask(cfg.lb, cfg) == pytest.approx(1.0)
    assert sai.alpha_from_mask(cfg.ub, cfg) == pytest.approx(0.0)


def test_errors_carry_code():
    with pytest.raises(sai.SaiError) as info:
        sai.load_session("/nonexistent/session")
    assert info.value.code == "ManifestMissing"
    with pytest.raises(sai.SaiError):
        sai.MaskConfig(sai.MaskSource.VDVI, t=0.1, lb=0.2, ub=0.1)


def test_integral_beats_single_view():
    cfg, scene, session = small_scene()
    assert scene.measured_density == pytest.approx(0.3, abs=0.02)
    ref = np.eye(4)
    surf = sai.FocalSurfaceParams.plane(cfg.bg_depth)
    full = sai.render_integral(session, cfg.reference, ref, surf)
    one = sai.render_pinhole(session, 4, cfg.reference, ref, surf)
    m_full = sai.sim.evaluate_recovery(full, scene, cfg.reference, ref)
    m_one = sai.sim.evaluate_recovery(one, scene, cfg.reference, ref)
    assert m_full["residual_occ"] < m_one["residual_occ"]


def test_autofocus_brackets_background():
    cfg, _, session = small_scene(count=12)
    z, metric, samples = sai.autofocus_depth(session, cfg.reference, np.eye(4), z_min=2.0, z_max=10.0)
    assert 2.0 <= z <= 10.0
    assert metric > 0
    assert len(samples) > 10


def test_session_roundtrip(tmp_path):
    _, _, session = small_scene(count=3)
    sai.save_session(session, tmp_path, surface=sai.FocalSurfaceParams.plane(5.0))
    loaded = sai.load_session(tmp_path)
    assert len(loaded.session) == 3
    assert loaded.surface == sai.FocalSurfaceParams.plane(5.0)
    assert loaded.band == "rgb"
    np.testing.assert_allclose(loaded.session.pose(2), session.pose(2))
    np.testing.assert_allclose(loaded.session.image(0), session.image(0), atol=1.0 / 65535)


def test_frame_codec():
    _, _, session = small_scene(count=2)
    out = sai.render_integral(session, session.intrinsics(0), np.eye(4), sai.FocalSurfaceParams.plane(5.0))
    data = sai.encode_frame(out, 7, '{"z":5}')
    assert int.from_bytes(data[:4], "little") == 0x53414946
    frame_id, pixels, echo = sai.decode_frame(data)
    assert frame_id == 7 and echo == '{"z":5}'
    assert pixels.shape[:2] == (120, 160)


def test_density_sweep_rows():
    spec = sai.sim.TrajectorySpec()
    spec.count = 4
    cfg = sai.sim.SceneConfig()
    cfg.reference = sai.Intrinsics.centered(80, 60, 62.5)
    rows = sai.sim.density_sweep([0.2, 0.5], spec, cfg, sai.FocalSurfaceParams.plane(5.0), seeds=[1])
    assert [r[0] for r in rows] == [0.2, 0.5]
    for density, seed, single, integral, gain in rows:
        assert gain == pytest.approx(integral - single)
