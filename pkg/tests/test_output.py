import re
import xml.etree.ElementTree as ET
from dataclasses import replace

import matplotlib
import numpy as np
import pytest

from patternflow.core.errors import InvalidInputError
from patternflow.dynamics.flow import integrate
from patternflow.models.models import FlowMode, Trajectory
from patternflow.runner.output import emit_csv, emit_svg, read_csv, read_summary, render_svg, write_summary

SVG_NS = "{http://www.w3.org/2000/svg}"
NUMBER = re.compile(r"-?\d+(?:\.\d*)?(?:e[-+]?\d+)?")


@pytest.fixture
def short_run(regime1_scenario):
    return integrate(replace(regime1_scenario, horizon=50.0))


def _series_paths(svg: str, names) -> dict[str, np.ndarray]:
    """Vertices of each named line, in SVG pixel coordinates."""
    root = ET.fromstring(svg)
    lines = {}
    for group in root.iter(f"{SVG_NS}g"):
        path = group.find(f"{SVG_NS}path")
        if group.get("id") not in names or group.get("id") in lines or path is None:
            continue
        numbers = [float(n) for n in NUMBER.findall(path.get("d", ""))]
        lines[group.get("id")] = np.array(numbers).reshape(-1, 2)
    return lines


def test_empty_trajectory_writes_header_only(tmp_path):
    path = emit_csv(Trajectory.empty(3, FlowMode.RLVR_FLOW), tmp_path / "empty.csv")
    assert path.read_text() == "t,acc,dacc,pi_1,pi_2,pi_3\n"
    back = read_csv(path)
    assert len(back) == 0
    assert back.k == 3


def test_csv_round_trip_is_bit_exact(tmp_path, short_run):
    path = emit_csv(short_run, tmp_path / "run" / "trajectory.csv")
    text = path.read_text()
    lines = text.split("\n")
    assert lines[0] == "t,acc,dacc,pi_1,pi_2,pi_3"
    assert text.endswith("\n") and not text.endswith("\n\n")
    assert len(lines) == len(short_run) + 2

    back = read_csv(path, FlowMode.RLVR_FLOW, short_run.scenario_digest)
    np.testing.assert_array_equal(back.t, short_run.t)
    np.testing.assert_array_equal(back.probs, short_run.probs)
    np.testing.assert_array_equal(back.acc, short_run.acc)
    np.testing.assert_array_equal(back.dacc, short_run.dacc)
    assert back.scenario_digest == short_run.scenario_digest


def test_csv_leaves_no_temp_files(tmp_path, short_run):
    emit_csv(short_run, tmp_path / "trajectory.csv")
    assert [p.name for p in tmp_path.iterdir()] == ["trajectory.csv"]


def test_read_csv_rejects_foreign_files(tmp_path):
    bad_header = tmp_path / "bad.csv"
    bad_header.write_text("time,accuracy\n0,0.5\n")
    with pytest.raises(InvalidInputError):
        read_csv(bad_header)

    bad_cell = tmp_path / "cell.csv"
    bad_cell.write_text("t,acc,dacc,pi_1,pi_2\n0,0.5,0.1,abc,0.5\n")
    with pytest.raises(InvalidInputError):
        read_csv(bad_cell)


def test_summary_round_trip(tmp_path):
    assert read_summary(tmp_path) is None
    write_summary(tmp_path, {"scenario_digest": "abc", "samples": 3})
    assert read_summary(tmp_path) == {"scenario_digest": "abc", "samples": 3}


def test_svg_is_deterministic(tmp_path, short_run):
    first = emit_svg(short_run, ["acc", "pi_1"], tmp_path / "a.svg").read_bytes()
    second = emit_svg(short_run, ["acc", "pi_1"], tmp_path / "b.svg").read_bytes()
    assert first == second
    assert b"<dc:date>" not in first


def test_svg_has_one_line_per_series(short_run):
    names = ["acc", "pi_1", "pi_2"]
    lines = _series_paths(render_svg(short_run, names, title="Regime 1"), names)
    assert sorted(lines) == names
    for points in lines.values():
        assert points.shape == (len(short_run), 2)


def test_svg_rising_series_moves_up(short_run):
    points = _series_paths(render_svg(short_run, ["pi_1"]), ["pi_1"])["pi_1"]
    # larger values sit higher on the page, i.e. at smaller y
    assert np.all(np.diff(points[:, 0]) >= 0)
    assert np.all(np.diff(points[:, 1]) <= 1e-3)


def test_svg_single_sample_is_valid(regime1_scenario):
    single = integrate(replace(regime1_scenario, horizon=0.0))
    root = ET.fromstring(render_svg(single, ["acc"]))
    assert "acc" in {group.get("id") for group in root.iter(f"{SVG_NS}g")}


def test_svg_escapes_title(short_run):
    svg = render_svg(short_run, ["acc"], title="<acc & pi>")
    assert "&lt;acc &amp; pi&gt;" in svg
    ET.fromstring(svg)


def test_svg_leaves_global_style_alone(short_run):
    before = matplotlib.rcParams["svg.hashsalt"]
    render_svg(short_run, ["acc"])
    assert matplotlib.rcParams["svg.hashsalt"] == before


def test_svg_rejects_bad_requests(short_run):
    with pytest.raises(InvalidInputError):
        render_svg(short_run, [])
    with pytest.raises(InvalidInputError):
        render_svg(short_run, ["pi_9"])
    with pytest.raises(InvalidInputError):
        render_svg(Trajectory.empty(3, FlowMode.RLVR_FLOW), ["acc"])
