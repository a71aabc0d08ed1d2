"""Tests for binary field dumps, CSV payloads, and run manifests."""

import math
import struct

import numpy as np
import pytest

from driftlab.config import ExperimentConfig, dump_config, parse_config
from driftlab.io import (
    ERROR_REPORT_COLUMNS,
    MAGIC,
    fmt,
    read_dump,
    write_csv,
    write_error_report_csv,
    write_field_dump,
    write_manifest,
    write_modulation_csv,
    write_modulation_dump,
    write_plot_xy,
    write_timeseries_csv,
)
from driftlab.models import get_model
from driftlab.modulation import CoefficientTrack, ModulationState
from driftlab.physical import FieldState, Grid, make_state

M1 = get_model("m1")
M3 = get_model("m3")
M4 = get_model("m4")


def test_fmt_round_trips_floats():
    for x in (0.1, 1 / 3, 2.0, -1e-17, 6.02e23, 0.05 ** 4):
        assert float(fmt(x)) == x
    assert fmt(float("nan")) == "nan"


def test_field_dump_round_trip_two_components(tmp_path):
    grid = Grid(n_points=32, length=2 * math.pi)
    x = grid.x()
    state = make_state(M3, grid, (np.cos(x), np.sin(2 * x)),
                       mu=-0.125, eps=1e-3, time=2.5)
    path = tmp_path / "state.bmod"
    write_field_dump(path, "m3", state)
    dump = read_dump(path)
    assert dump.code == 3
    assert not dump.is_modulation
    assert dump.model_id == "m3"
    assert (dump.dimension, dump.nx, dump.ny) == (1, 32, 1)
    assert (dump.time, dump.mu, dump.eps) == (2.5, -0.125, 1e-3)
    assert len(dump.planes) == 2
    assert np.array_equal(dump.planes[0], np.cos(x))
    assert np.array_equal(dump.planes[1], np.sin(2 * x))
    with pytest.raises(ValueError, match="no complex amplitudes"):
        dump.amplitudes()


def test_field_dump_layout_bytes(tmp_path):
    # verify the exact on-disk layout with a hand-unpacked tiny 2-D state
    grid = Grid(n_points=16, length=2 * math.pi, dimension=2, n_y=16)
    u = np.arange(256, dtype=float).reshape(16, 16)
    v = -u
    state = FieldState(grid=grid, components=(u, v), mu=0.5, eps=0.0, time=1.0)
    path = tmp_path / "layout.bmod"
    write_field_dump(path, "m4", state)
    raw = path.read_bytes()
    assert raw[:5] == MAGIC
    code, n, dim, nx, ny = struct.unpack_from("<5I", raw, 5)
    assert (code, n, dim, nx, ny) == (4, 2, 2, 16, 16)
    t, mu, eps = struct.unpack_from("<3d", raw, 25)
    assert (t, mu, eps) == (1.0, 0.5, 0.0)
    first_row = struct.unpack_from("<16d", raw, 49)
    assert first_row == tuple(float(i) for i in range(16))  # row-major
    assert len(raw) == 49 + 2 * 256 * 8


def test_modulation_dump_round_trip(tmp_path):
    track = CoefficientTrack.frozen(M1, mu_bar=1.0)
    grid = Grid(n_points=16, length=4 * math.pi)
    amp = np.exp(1j * np.linspace(0, 1, 16)) * 0.3
    state = ModulationState(track=track, grid=grid, amplitudes=(amp,), tbar=0.5)
    path = tmp_path / "env.bmod"
    write_modulation_dump(path, state)
    dump = read_dump(path)
    assert dump.code == 101
    assert dump.is_modulation
    assert dump.model_id == "m1"
    assert dump.time == 0.5
    assert dump.mu == 1.0  # frozen drift coefficient
    assert dump.eps == 0.0
    assert len(dump.planes) == 2
    (recovered,) = dump.amplitudes()
    assert np.array_equal(recovered, amp)


def test_read_dump_rejects_corruption(tmp_path):
    good = tmp_path / "good.bmod"
    grid = Grid(n_points=16, length=2 * math.pi)
    state = make_state(M1, grid, (np.zeros(16),))
    write_field_dump(good, "m1", state)

    bad_magic = tmp_path / "bad_magic.bmod"
    bad_magic.write_bytes(b"NOPE!" + good.read_bytes()[5:])
    with pytest.raises(ValueError, match="magic"):
        read_dump(bad_magic)

    truncated = tmp_path / "short.bmod"
    truncated.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(ValueError, match="truncated"):
        read_dump(truncated)

    padded = tmp_path / "long.bmod"
    padded.write_bytes(good.read_bytes() + b"\x00")
    with pytest.raises(ValueError, match="trailing"):
        read_dump(padded)


def test_timeseries_csv(tmp_path):
    grid = Grid(n_points=16, length=2 * math.pi)
    states = [
        make_state(M3, grid, (np.full(16, 0.5 * j), np.full(16, -j)),
                   mu=0.1 * j, time=float(j))
        for j in range(3)
    ]
    path = tmp_path / "ts.csv"
    write_timeseries_csv(path, states)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,mu,sup_1,sup_2"
    assert lines[1] == "0,0,0,0"
    cells = lines[2].split(",")
    assert float(cells[0]) == 1.0
    assert float(cells[2]) == 0.5
    assert float(cells[3]) == 1.0
    assert len(lines) == 4


def test_modulation_csv(tmp_path):
    track = CoefficientTrack.frozen(M1, mu_bar=1.0)
    grid = Grid(n_points=16, length=2 * math.pi)
    amp = np.full(16, 0.25 + 0.5j)
    state = ModulationState(track=track, grid=grid, amplitudes=(amp,))
    path = tmp_path / "mod.csv"
    write_modulation_csv(path, [state])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,drift,mass_1_re,mass_1_im,sup_1"
    cells = [float(c) for c in lines[1].split(",")]
    assert cells[0] == 0.0
    assert cells[1] == 1.0
    assert cells[2] == pytest.approx(0.25 * 2 * math.pi, rel=1e-15)
    assert cells[3] == pytest.approx(0.5 * 2 * math.pi, rel=1e-15)
    assert cells[4] == pytest.approx(abs(0.25 + 0.5j), rel=1e-15)


def test_error_report_csv_blank_cells(tmp_path):
    path = tmp_path / "report.csv"
    write_error_report_csv(path, [
        {"delta": 0.2, "max_error": 1e-3, "slope": 2.0},
        {"eps": 1e-3, "t_takeoff": 95.0, "mu_takeoff": 0.045},
    ])
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(ERROR_REPORT_COLUMNS)
    assert lines[1].split(",")[0] == fmt(0.2)
    assert lines[1].split(",")[1] == ""  # eps not set on the static row
    assert lines[2].split(",")[0] == ""  # delta not set on the delay row
    assert float(lines[2].split(",")[6]) == 0.045


def test_plot_xy_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    xs = [0.2, 0.1, 0.05]
    ys = [3e-4, 8e-5, 2e-5]
    write_plot_xy(a, xs, ys, labels=("delta", "err"))
    write_plot_xy(b, xs, ys, labels=("delta", "err"))
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "delta,err"
    with pytest.raises(ValueError, match="mismatch"):
        write_plot_xy(a, [1.0], [])


def test_csv_write_is_deterministic(tmp_path):
    rows = [[1 / 3, 0.1, None], [2e-9, -5.0, 7.0]]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(a, ("x", "y", "z"), rows)
    write_csv(b, ("x", "y", "z"), rows)
    assert a.read_bytes() == b.read_bytes()
    assert b"\r" not in a.read_bytes()


def test_manifest_round_trip(tmp_path):
    cfg = ExperimentConfig(experiment="spectra", model="m2",
                           model_params={"a": 1.5}, samples=11)
    path = tmp_path / "manifest.txt"
    write_manifest(path, dump_config(cfg), "v1.2.3-4-gabc", "linux cpython")
    text = path.read_text()
    assert text.startswith("# driftlab v1.2.3-4-gabc\n# platform: linux cpython\n")
    assert parse_config(text) == cfg
