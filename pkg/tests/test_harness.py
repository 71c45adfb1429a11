import textwrap
from pathlib import Path

import pytest

import evsl
from evsl.cli import main as cli_main
from evsl.harness import (
    ConfigError,
    Scenario,
    compare_sampling,
    load_scenario,
    parse_scenario,
    run_scenario,
    sweep_dwell_time,
    sweep_event_rate,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def tiny_scenario(policy=None, periods=3, noise=None, seed=5, objects=None):
    if objects is None:
        objects = (evsl.MovingObject(10, 10, 12, 8, (0.0006, 0.0), 1.9995, 0.95),)
    script = evsl.SceneScript((64, 48), periods * 16666.666666666668, evsl.Background(2.0, 0.5), objects)
    geom = evsl.SensorGeometry((64, 48), (64, 48), 600.0, 0.04)
    proj = evsl.ProjectorModel((64, 48), 60.0)
    return Scenario(
        script=script,
        geometry=geom,
        projector=proj,
        noise=noise or evsl.NoiseModel.noiseless(),
        policy=policy or evsl.EventGuidedPolicy(first_period="sparse"),
        periods=periods,
        seed=seed,
    )


def scenario_yaml(tmp_path, **overrides):
    text = textwrap.dedent("""\
        scene:
          resolution: [64, 48]
          background:
            depth_m: 2.0
            intensity: 0.5
          objects:
            - rect_px: [10, 10, 12, 8]
              velocity_px_per_us: [0.0006, 0.0]
              depth_m: 1.9995
              intensity: 0.95
        geometry:
          cam_resolution: [64, 48]
          proj_resolution: [64, 48]
          focal_length_px: 600.0
          baseline_m: 0.04
        projector:
          scan_frequency_hz: 60.0
        noise:
          jitter_anchors: []
          quantization_us: 0.0
        policy:
          kind: event_guided
          first_period: sparse
        run:
          periods: 3
          seed: 5
    """)
    path = tmp_path / "tiny.yaml"
    path.write_text(text)
    return path


class TestScenarioConfig:
    def test_yaml_round_trip(self, tmp_path):
        sc = load_scenario(scenario_yaml(tmp_path))
        assert sc.periods == 3
        assert isinstance(sc.policy, evsl.EventGuidedPolicy)
        assert sc.noise.jitter_anchors == ()
        assert sc.script.duration_us == pytest.approx(3 * sc.projector.period_us)

    def test_unknown_key_reports_path(self):
        with pytest.raises(ConfigError, match=r"policy\.striide"):
            parse_scenario({
                "scene": {"resolution": [8, 8], "background": {"depth_m": 2.0}},
                "geometry": {"cam_resolution": [8, 8], "proj_resolution": [8, 8], "focal_length_px": 10.0},
                "projector": {"scan_frequency_hz": 60.0},
                "policy": {"kind": "sparse", "striide": 4},
                "run": {"periods": 1},
            })

    def test_bad_value_reports_path(self):
        with pytest.raises(ConfigError, match=r"geometry\.focal_length_px"):
            parse_scenario({
                "scene": {"resolution": [8, 8], "background": {"depth_m": 2.0}},
                "geometry": {"cam_resolution": [8, 8], "proj_resolution": [8, 8], "focal_length_px": -1.0},
                "projector": {"scan_frequency_hz": 60.0},
                "policy": {"kind": "dense"},
                "run": {"periods": 1},
            })

    def test_missing_section_reported(self):
        with pytest.raises(ConfigError, match="geometry"):
            parse_scenario({
                "scene": {"resolution": [8, 8], "background": {"depth_m": 2.0}},
                "projector": {"scan_frequency_hz": 60.0},
                "policy": {"kind": "dense"},
                "run": {"periods": 1},
            })

    def test_duration_must_cover_periods(self):
        with pytest.raises(ConfigError, match="duration"):
            parse_scenario({
                "scene": {"resolution": [8, 8], "duration_us": 10.0, "background": {"depth_m": 2.0}},
                "geometry": {"cam_resolution": [8, 8], "proj_resolution": [8, 8], "focal_length_px": 10.0},
                "projector": {"scan_frequency_hz": 60.0},
                "policy": {"kind": "dense"},
                "run": {"periods": 2},
            })

    def test_shipped_scenarios_load(self):
        for name in ("plane_compare", "moving_object", "stationary", "noiseless_plane"):
            sc = load_scenario(SCENARIOS / f"{name}.yaml")
            assert sc.periods >= 1


class TestRunScenario:
    def test_dense_noiseless_plane(self):
        sc = tiny_scenario(policy=evsl.DensePolicy(), objects=())
        reports = run_scenario(sc)
        for r in reports:
            assert r.mask_fraction == 1.0
            assert r.power_proxy == 1.0
            assert r.plane_rms_m == pytest.approx(0.0, abs=1e-9)
            assert r.guide_event_rate == 0.0

    def test_event_guided_mask_between_floor_and_cap(self):
        reports = run_scenario(tiny_scenario())
        floor = evsl.build_mask(evsl.SparsePolicy(16), (64, 48)).fraction
        for r in reports[1:]:
            assert floor <= r.mask_fraction < 0.5
        assert reports[1].mask_fraction > floor  # the moving object grew the mask

    def test_power_proxy_is_mask_fraction(self):
        for r in run_scenario(tiny_scenario()):
            assert r.power_proxy == r.mask_fraction

    def test_period_failure_recorded_and_run_continues(self):
        # a single-row camera makes every reconstructed cloud collinear, so
        # the plane fit fails; the run must keep going and log the failure
        script = evsl.SceneScript((64, 1), 2 * 16666.666666666668, evsl.Background(2.0, 0.5))
        geom = evsl.SensorGeometry((64, 1), (64, 1), 600.0, 0.04)
        proj = evsl.ProjectorModel((64, 1), 60.0)
        sc = Scenario(script, geom, proj, evsl.NoiseModel.noiseless(), evsl.DensePolicy(),
                      periods=2, evaluate_plane=True)
        reports = run_scenario(sc)
        assert len(reports) == 2
        assert all(r.error is not None and "Degenerate" in r.error for r in reports)

    def test_period_count_and_indices(self):
        reports = run_scenario(tiny_scenario(periods=4))
        assert [r.period for r in reports] == [0, 1, 2, 3]

    def test_guide_streams_can_be_shared(self):
        sc = tiny_scenario()
        from evsl.harness import generate_guide_for

        period = sc.projector.period_us
        guides = [generate_guide_for(sc, (p * period, (p + 1) * period), p) for p in range(sc.periods)]
        a = run_scenario(sc)
        b = run_scenario(sc, guide_streams=guides)
        assert a == b

    def test_parallel_equals_single_thread(self):
        sc = tiny_scenario(noise=evsl.NoiseModel(seed=0))
        assert run_scenario(sc, parallel=False) == run_scenario(sc, parallel=True)

    def test_artifacts_written(self, tmp_path):
        sc = tiny_scenario(periods=2)
        run_scenario(sc, dump=("events", "masks", "depth", "ply"), out_dir=tmp_path)
        assert (tmp_path / "periods.csv").exists()
        for tag in ("p000", "p001"):
            assert (tmp_path / f"guide_{tag}.txt").exists()
            assert (tmp_path / f"reflect_{tag}.txt").exists()
            assert (tmp_path / f"mask_{tag}.pbm").exists()
            assert (tmp_path / f"depth_{tag}.pgm").exists()
            assert (tmp_path / f"depth_{tag}.pgm.meta").exists()
            assert (tmp_path / f"cloud_{tag}.ply").exists()

    def test_unknown_dump_kind_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="dump"):
            run_scenario(tiny_scenario(), dump=("pictures",), out_dir=tmp_path)

    def test_determinism_byte_identical(self, tmp_path):
        sc = tiny_scenario(noise=evsl.NoiseModel(seed=0), periods=2)
        run_scenario(sc, dump=("depth",), out_dir=tmp_path / "a")
        run_scenario(sc, dump=("depth",), out_dir=tmp_path / "b")
        for name in ("periods.csv", "depth_p000.pgm", "depth_p001.pgm"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_report_recomputable_from_artifacts(self, tmp_path):
        # auditability: the CSV numbers can be rebuilt from the dumped files
        sc = tiny_scenario(periods=2)
        reports = run_scenario(sc, dump=("events", "masks", "depth"), out_dir=tmp_path)
        from evsl.formats import read_event_stream, read_pbm

        r = reports[1]
        period_s = sc.projector.period_us * 1e-6
        guide = read_event_stream(tmp_path / "guide_p001.txt", (64, 48))
        reflect = read_event_stream(tmp_path / "reflect_p001.txt", (64, 48))
        mask = read_pbm(tmp_path / "mask_p001.pbm")
        assert len(guide) / period_s == pytest.approx(r.guide_event_rate)
        assert len(reflect) / period_s == pytest.approx(r.reflection_event_rate)
        assert mask.fraction == pytest.approx(r.mask_fraction)
        from evsl.formats import read_depth_pgm

        depth = read_depth_pgm(tmp_path / "depth_p001.pgm")
        assert depth.valid_count == r.valid_depth_pixels


class TestCompareSampling:
    def test_zero_noise_rates_ordered_rms_zero(self):
        rows = compare_sampling(tiny_scenario())
        by = {r["policy"]: r for r in rows}
        assert by["dense"]["mean_plane_rms_m"] == pytest.approx(0.0, abs=1e-9)
        assert by["sparse"]["mean_plane_rms_m"] == pytest.approx(0.0, abs=1e-9)
        assert by["event_guided"]["mean_plane_rms_m"] == pytest.approx(0.0, abs=1e-9)
        assert (
            by["dense"]["mean_reflection_rate_ev_s"]
            > by["event_guided"]["mean_reflection_rate_ev_s"]
            > by["sparse"]["mean_reflection_rate_ev_s"]
        )

    def test_background_stride_one_collapses_to_dense(self):
        sc = tiny_scenario(policy=evsl.EventGuidedPolicy(background_stride=1, first_period="dense"))
        rows = compare_sampling(sc)
        by = {r["policy"]: r for r in rows}
        for key in ("mean_mask_fraction", "mean_reflection_rate_ev_s", "mean_plane_rms_m"):
            assert by["sparse"][key] == by["dense"][key]

    def test_csv_written(self, tmp_path):
        compare_sampling(tiny_scenario(), out_dir=tmp_path)
        lines = (tmp_path / "compare_sampling.csv").read_text().splitlines()
        assert lines[0].startswith("policy,")
        assert len(lines) == 4


class TestSweeps:
    def test_dwell_flags(self):
        rows = sweep_dwell_time(frequencies_hz=[60])
        by = {r["preset"]: r for r in rows}
        assert by["DVS128"]["below_1us"] is False
        assert by["Gen4_CD"]["below_1us"] is True
        assert by["Gen4_CD"]["delta_t_s"] == pytest.approx(1.0 / (60 * 1280 * 720), rel=1e-12)

    def test_all_presets_below_1us_at_290(self):
        rows = sweep_dwell_time(frequencies_hz=[290])
        assert all(r["below_1us"] for r in rows)

    def test_event_rate_values(self):
        rows = sweep_event_rate(frequencies_hz=[50, 290])
        gen4 = [r for r in rows if r["preset"] == "Gen4_CD"]
        assert gen4[0]["event_rate_ev_s"] == pytest.approx(46.08e6)
        assert gen4[1]["event_rate_ev_s"] == pytest.approx(267.264e6)

    def test_dvs128_growth_small(self):
        rows = [r for r in sweep_event_rate(frequencies_hz=range(50, 291, 10)) if r["preset"] == "DVS128"]
        rates = [r["event_rate_ev_s"] for r in rows]
        assert max(rates) / min(rates) == pytest.approx(290 / 50, rel=1e-12)
        assert max(rates) < 5e6


class TestCli:
    def test_simulate_and_exit_code(self, tmp_path, capsys):
        path = scenario_yaml(tmp_path)
        code = cli_main(["simulate", str(path), "--out-dir", str(tmp_path / "out"), "--dump", "depth"])
        assert code == 0
        out = capsys.readouterr().out
        assert "illumination reduction vs dense" in out
        assert (tmp_path / "out" / "periods.csv").exists()

    def test_simulate_config_error_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text("scene: {resolution: [8, 8]}\n")
        assert cli_main(["simulate", str(bad)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_sweep_stdout(self, capsys):
        assert cli_main(["sweep-delta-t", "--f-min", "60", "--f-max", "60"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "preset,f_hz,delta_t_s,below_1us"
        assert len(out) == 8

    def test_sweep_to_file(self, tmp_path):
        target = tmp_path / "rates.csv"
        assert cli_main(["sweep-event-rate", "--out", str(target)]) == 0
        assert target.read_text().startswith("preset,f_hz,event_rate_ev_s")

    def test_compare_sampling_cli(self, tmp_path, capsys):
        path = scenario_yaml(tmp_path)
        assert cli_main(["compare-sampling", str(path), "--periods", "2"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("policy,")
        assert "event_guided" in out

    def test_active_pixels_cli(self, tmp_path, capsys):
        from evsl.formats import write_event_stream

        stream = evsl.EventStream((16, 16), [1.0, 2.0], [3, 3], [4, 4], [1, 1])
        path = tmp_path / "ev.txt"
        write_event_stream(stream, path)
        assert cli_main(["active-pixels", str(path), "--resolution", "16", "16"]) == 0
        out = capsys.readouterr().out
        assert out.strip() == f"active_pixel_fraction {1 / 256:.6g}"

    def test_seed_override_changes_output(self, tmp_path):
        path = scenario_yaml(tmp_path)
        a = tmp_path / "a"
        b = tmp_path / "b"
        cli_main(["simulate", str(path), "--out-dir", str(a), "--seed", "1"])
        cli_main(["simulate", str(path), "--out-dir", str(b), "--seed", "1"])
        assert (a / "periods.csv").read_bytes() == (b / "periods.csv").read_bytes()
