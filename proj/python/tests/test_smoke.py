import numpy as np
import pytest

import hiersteer as hs


def test_track_and_zones():
    track = hs.build_track()
    assert track.length > 10
    assert track.cone_count > 0
    zones = {track.zone_of(s) for s in np.linspace(0, track.length, 400, endpoint=False)}
    assert zones == {1, 2, 3, 4, 5}
    x, y, _ = track.at(1.0)
    s, d = track.project(x, y)
    assert s == pytest.approx(1.0, abs=1e-9)
    assert d == pytest.approx(0.0, abs=1e-9)


def test_bad_track_config():
    with pytest.raises(hs.ConstructionError):
        hs.build_track("lane_width = -1")
    with pytest.raises(hs.ParameterError):
        hs.build_track("no_such_key = 1")


def test_record_and_round_trip(tmp_path):
    track = hs.build_track()
    lap = hs.record_lap(track, hs.Direction.ccw, scale=0.25)
    assert len(lap) > 100
    images = lap.images
    assert images.shape == (len(lap), 6) + tuple(hs.input_shape(0.25)[1:])
    assert images.dtype == np.uint8
    path = tmp_path / "lap_ccw_1.hml"
    hs.write_lap(lap, path)
    back = hs.read_lap(path)
    assert back.steering == lap.steering
    assert back.zones == lap.zones
    assert np.array_equal(back.images, images)
    path.write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(hs.FormatError):
        hs.read_lap(path)


def test_render_and_models():
    track = hs.build_track()
    x, y, h = track.at(0.0)
    img = hs.render(track, x, y, h, scale=0.5)
    assert img.shape == (6, 47, 84)
    assert 0.0 <= img.min() and img.max() <= 1.0
    assert hs.param_count("srn1") < hs.param_count("baseline")
    out = hs.forward("mcn", 3, img[None], scale=0.5)
    assert out.shape == (5,)
    assert np.array_equal(out, hs.forward("mcn", 3, img[None], scale=0.5))


def test_router_requires_weights():
    r = hs.Router(0.5)
    assert not r.ready()
    with pytest.raises(hs.StateError):
        r.step(np.zeros((6, 47, 84), dtype=np.float32))


def test_pipeline_config():
    cfg = hs.PipelineConfig("seed = 5\nmcn.epochs = 3\n")
    assert cfg.seed == 5
    assert "mcn.epochs = 3" in cfg.to_text()
    with pytest.raises(hs.ParameterError):
        hs.PipelineConfig("mcn.epochs = 0")
