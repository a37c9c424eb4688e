"""Persistence: atomic writes, canonical formatting, manifests, round-trips."""

import json
import math
import os

import pytest

from lrslab.persist import (
    MANIFEST_NAME,
    OutputExistsError,
    atomic_write_text,
    config_hash,
    export_schedule,
    export_schedule_csv,
    fmt,
    import_schedule,
    prepare_out_dir,
    read_json,
    write_csv,
    write_json,
    write_jsonl,
    write_manifest,
    write_schedule_json,
)
from lrslab.schedules import ScheduleSpec, make_shape, schedule_lrs


def test_fmt_floats_round_trip():
    for x in (0.1, 1e-300, 3.141592653589793, -0.0, 2.0):
        assert float(fmt(x)) == x
    assert fmt(True) == "true"
    assert fmt(False) == "false"
    assert fmt(7) == "7"
    assert fmt(None) == ""
    assert fmt("con") == "con"
    assert fmt(math.nan) == "nan"


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write_text(target, "hello\n")
    assert target.read_text() == "hello\n"
    leftovers = [p for p in tmp_path.iterdir() if p.name != "out.txt"]
    assert leftovers == []


def test_atomic_write_overwrites_whole_file(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write_text(target, "x" * 1000)
    atomic_write_text(target, "short")
    assert target.read_text() == "short"


def test_write_csv_layout(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [[1, 0.5], [2, 0.25]])
    assert path.read_text() == "a,b\n1,0.5\n2,0.25\n"
    with pytest.raises(ValueError):
        write_csv(path, ["a", "b"], [[1]])


def test_write_json_canonical(tmp_path):
    path = tmp_path / "t.json"
    write_json(path, {"b": 1, "a": 2})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')  # sorted keys
    assert read_json(path) == {"a": 2, "b": 1}


def test_write_jsonl(tmp_path):
    path = tmp_path / "t.jsonl"
    write_jsonl(path, [{"i": 0}, {"i": 1}])
    lines = path.read_text().splitlines()
    assert [json.loads(x)["i"] for x in lines] == [0, 1]
    write_jsonl(path, [])
    assert path.read_text() == ""


def test_config_hash_stable_under_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_prepare_out_dir_collision(tmp_path):
    out = tmp_path / "run1"
    prepare_out_dir(out)
    assert out.is_dir()
    # Empty directory is reusable without force.
    prepare_out_dir(out)
    (out / "records.jsonl").write_text("{}\n")
    with pytest.raises(OutputExistsError):
        prepare_out_dir(out)
    prepare_out_dir(out, force=True)
    # A plain file at the target path is always an error.
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(OutputExistsError):
        prepare_out_dir(blocker, force=True)


def test_manifest_contents(tmp_path):
    config = {"family": "con", "n_shapes": 4}
    path = write_manifest(tmp_path, "search", config, master_seed=42, extra={"rows": 4})
    assert path.name == MANIFEST_NAME
    m = read_json(path)
    assert m["command"] == "search"
    assert m["config_sha256"] == config_hash(config)
    assert m["master_seed"] == 42
    assert m["rows"] == 4
    assert m["written_at_unix"] > 0


def test_export_schedule_rows(tmp_path):
    spec = ScheduleSpec(make_shape("con", warmup=0.0), base_lr=0.01, horizon=100)
    rows = export_schedule(spec, resolution=5)
    assert rows[0][0] == 0
    assert rows[-1][0] == 99
    assert all(lr == 0.01 for _, lr in rows)
    with pytest.raises(ValueError):
        export_schedule(spec, resolution=1)


def test_export_schedule_csv_midpoint(tmp_path):
    # Step 50 of horizon 100 is fraction 0.5; cos-std there halves the base
    # LR: 0.01 * (cos(pi/2) + 1)/2 = 0.005.
    spec = ScheduleSpec(
        make_shape("cos-std", warmup=0.0, alpha=1.0), base_lr=0.01, horizon=100
    )
    path = tmp_path / "sched.csv"
    export_schedule_csv(path, spec, resolution=100)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,lr"
    step, lr = lines[51].split(",")
    assert int(step) == 50
    assert float(lr) == pytest.approx(0.005, abs=1e-12)


def test_schedule_json_round_trip(tmp_path):
    spec = ScheduleSpec(
        make_shape("tps", x0=0.07, y1=0.83, delta_x1=0.31, delta_x2=0.55, delta_y2=0.49),
        base_lr=0.0316227766016838,
        horizon=1000,
    )
    path = tmp_path / "spec.json"
    write_schedule_json(path, spec)
    back = import_schedule(path)
    assert back == spec
    assert schedule_lrs(back).tobytes() == schedule_lrs(spec).tobytes()


def test_export_reimport_rescore_identical(tmp_path):
    # Export -> import -> re-evaluate gives the identical LR sequence, hence
    # an identical score under any deterministic objective.
    spec = ScheduleSpec(
        make_shape("snm", y_start=0.3, y_end=0.05, x_peak=0.2, y1=0.7,
                   delta_x1=0.05, y2=0.6, delta_x2=0.6),
        base_lr=0.11,
        horizon=256,
    )
    path = tmp_path / "best.json"
    write_schedule_json(path, spec)
    again = import_schedule(path)
    assert schedule_lrs(again).tobytes() == schedule_lrs(spec).tobytes()
