import math

import numpy as np
import pytest

from evsl.events import make_event_frame
from evsl.scene import (
    Background,
    CheckerTexture,
    GuideCameraModel,
    MovingObject,
    SceneScript,
    generate_guide_events,
    render_scene,
)


def plane_script(resolution=(32, 24), duration=100000.0, objects=()):
    return SceneScript(resolution, duration, Background(2.0, 0.5), tuple(objects))


class TestRenderScene:
    def test_background_only(self):
        img, dm = render_scene(plane_script(), 0.0)
        assert np.all(img == 0.5)
        assert np.all(dm.depth == 2.0)
        assert dm.valid.all()

    def test_object_pixel_count(self):
        obj = MovingObject(5, 5, 10, 10, (0.0, 0.0), 1.0, 0.9)
        _, dm = render_scene(plane_script(objects=[obj]), 0.0)
        assert (dm.depth == 1.0).sum() == 100

    def test_kinematics_shift(self):
        obj = MovingObject(2, 5, 4, 4, (0.001, 0.0), 1.0, 0.9)
        _, at0 = render_scene(plane_script(objects=[obj]), 0.0)
        _, at10k = render_scene(plane_script(objects=[obj]), 10000.0)
        assert np.array_equal(np.roll(at0.depth == 1.0, 10, axis=1), at10k.depth == 1.0)

    def test_nearest_object_wins(self):
        near = MovingObject(4, 4, 6, 6, (0.0, 0.0), 0.5, 0.8)
        far = MovingObject(4, 4, 6, 6, (0.0, 0.0), 1.5, 0.3)
        _, dm = render_scene(plane_script(objects=[far, near]), 0.0)
        assert np.all(dm.depth[4:10, 4:10] == 0.5)

    def test_clipping_at_frame_edge(self):
        obj = MovingObject(-3, -3, 6, 6, (0.0, 0.0), 1.0, 0.9)
        _, dm = render_scene(plane_script(objects=[obj]), 0.0)
        assert (dm.depth == 1.0).sum() == 9

    def test_time_outside_duration_rejected(self):
        with pytest.raises(ValueError):
            render_scene(plane_script(duration=10.0), 11.0)

    def test_object_behind_background_rejected(self):
        with pytest.raises(ValueError, match="front"):
            plane_script(objects=[MovingObject(0, 0, 2, 2, (0, 0), 3.0, 0.9)])

    def test_checker_texture(self):
        script = SceneScript((8, 8), 10.0, Background(2.0, checker=CheckerTexture(2, 0.3, 0.7)))
        img, _ = render_scene(script, 0.0)
        assert img[0, 0] == 0.3
        assert img[0, 2] == 0.7
        assert img[2, 0] == 0.7


class TestGuideEvents:
    def test_static_scene_is_silent(self):
        stream = generate_guide_events(plane_script(), GuideCameraModel(), (0.0, 50000.0))
        assert len(stream) == 0

    def test_threshold_multiples(self):
        # an object edge entering a pixel jumps its log intensity by 2.5 C
        c = 0.3
        bg = 0.2
        obj_intensity = bg * math.exp(2.5 * c)
        obj = MovingObject(-1.0, 0.0, 1, 1, (0.0008, 0.0), 1.0, obj_intensity)
        script = SceneScript((3, 1), 4000.0, Background(2.0, bg), (obj,))
        cam = GuideCameraModel(contrast_threshold=c, render_rate_hz=1000.0)
        # the object covers pixel 0 by the t=1000 render and stays until 1875
        stream = generate_guide_events(script, cam, (0.0, 1200.0))
        at0 = [e for e in stream if (e.x, e.y) == (0, 0)]
        assert len(at0) == 2
        assert all(e.p == 1 for e in at0)

    def test_edge_only_against_reference_model(self):
        obj = MovingObject(4, 6, 8, 6, (0.0008, 0.0), 1.0, 0.9)
        script = plane_script((32, 24), 40000.0, [obj])
        cam = GuideCameraModel(contrast_threshold=0.3, render_rate_hz=1000.0)
        stream = generate_guide_events(script, cam, (0.0, 40000.0))
        counts = make_event_frame(stream, (0.0, 40000.0)).counts

        # reference model: per-pixel sequential threshold bookkeeping over the
        # same render instants
        step = 1000.0
        times = [i * step for i in range(41)]
        ref = np.log(render_scene(script, times[0])[0])
        expected = np.zeros((24, 32), dtype=int)
        for t in times[1:]:
            cur = np.log(render_scene(script, t)[0])
            dl = cur - ref
            n = np.floor(np.abs(dl) / 0.3).astype(int)
            expected += n
            ref += np.sign(dl) * n * 0.3
        assert np.array_equal(counts, expected)

    def test_interior_and_background_silent(self):
        obj = MovingObject(4, 6, 8, 6, (0.0008, 0.0), 1.0, 0.9)
        script = plane_script((32, 24), 20000.0, [obj])
        stream = generate_guide_events(script, GuideCameraModel(), (0.0, 20000.0))
        counts = make_event_frame(stream, (0.0, 20000.0)).counts
        # the object's vertical edges sweep x in [4, 4+16) and [12, 12+16);
        # rows outside the object must stay silent
        assert counts[:6, :].sum() == 0
        assert counts[12:, :].sum() == 0

    def test_doubling_threshold_never_raises_counts(self):
        obj = MovingObject(4, 6, 8, 6, (0.0006, 0.0004), 1.0, 0.95)
        script = plane_script((32, 24), 30000.0, [obj])
        lo = generate_guide_events(script, GuideCameraModel(contrast_threshold=0.2), (0.0, 30000.0))
        hi = generate_guide_events(script, GuideCameraModel(contrast_threshold=0.4), (0.0, 30000.0))
        lo_counts = make_event_frame(lo, (0.0, 30000.0)).counts
        hi_counts = make_event_frame(hi, (0.0, 30000.0)).counts
        assert np.all(hi_counts <= lo_counts)

    def test_sorted_and_inside_interval(self):
        obj = MovingObject(0, 0, 6, 6, (0.001, 0.0), 1.0, 0.9)
        script = plane_script((32, 24), 50000.0, [obj])
        stream = generate_guide_events(script, GuideCameraModel(), (10000.0, 30000.0))
        assert np.all(np.diff(stream.t) >= 0)
        assert len(stream) > 0
        assert stream.t[0] >= 10000.0
        assert stream.t[-1] < 30000.0

    def test_interval_outside_duration_rejected(self):
        with pytest.raises(ValueError):
            generate_guide_events(plane_script(duration=10.0), GuideCameraModel(), (0.0, 20.0))

    def test_background_noise_rate(self):
        cam = GuideCameraModel(noise_rate_hz=50.0)
        script = plane_script((32, 24), 1_000_000.0)
        stream = generate_guide_events(script, cam, (0.0, 1_000_000.0), seed=123)
        expected = 50.0 * 32 * 24 * 1.0  # rate * pixels * seconds
        assert len(stream) == pytest.approx(expected, rel=0.2)
        again = generate_guide_events(script, cam, (0.0, 1_000_000.0), seed=123)
        assert np.array_equal(stream.t, again.t)

    def test_timestamps_interpolated_between_steps(self):
        c = 0.3
        bg = 0.2
        obj_intensity = bg * math.exp(2.2 * c)
        obj = MovingObject(-1.0, 0.0, 1, 1, (0.0008, 0.0), 1.0, obj_intensity)
        script = SceneScript((3, 1), 4000.0, Background(2.0, bg), (obj,))
        cam = GuideCameraModel(contrast_threshold=c, render_rate_hz=1000.0)
        stream = generate_guide_events(script, cam, (0.0, 1200.0))
        at0 = [e.t for e in stream if (e.x, e.y) == (0, 0)]
        assert len(at0) == 2
        step_start = math.floor(at0[0] / 1000.0) * 1000.0
        dl = math.log(obj_intensity) - math.log(bg)
        assert at0[0] == pytest.approx(step_start + 1000.0 * c / dl)
        assert at0[1] == pytest.approx(step_start + 1000.0 * 2 * c / dl)
