"""Artifact readers and writers: binary field dumps, CSV payloads, manifests.

Binary dump layout (magic ``BMOD1``): little-endian ``u32`` header fields
(model code, number of stored planes, dimension, nx, ny), then ``f64``
time, ``f64`` mu, ``f64`` eps, then the planes in row-major ``f64``.
Physical states use model codes 1-4 and one plane per component;
modulation (envelope) states use codes 101-104 and two planes per complex
amplitude (real part then imaginary part).  For modulation dumps the time
field is the slow clock and the mu/eps slots carry the drift coefficients
(mu_bar and the radial rate rho) evaluated at that time.  Grid geometry
beyond the point counts (box lengths, chart data) travels in the run
manifest, not in the dump.

All CSV text is written with ``%.17g`` floats, ``\\n`` line endings, and
UTF-8, so identical data produces identical bytes on every platform.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .physical import FieldState

__all__ = [
    "MAGIC",
    "Dump",
    "fmt",
    "write_field_dump",
    "write_modulation_dump",
    "read_dump",
    "write_csv",
    "write_timeseries_csv",
    "write_modulation_csv",
    "write_error_report_csv",
    "write_plot_xy",
    "write_manifest",
    "ERROR_REPORT_COLUMNS",
]

MAGIC = b"BMOD1"
_MODEL_CODES = {"m1": 1, "m2": 2, "m3": 3, "m4": 4}
_CODE_MODELS = {v: k for k, v in _MODEL_CODES.items()}
_MODULATION_OFFSET = 100
_HEADER = struct.Struct("<5I3d")

ERROR_REPORT_COLUMNS = (
    "delta", "eps", "max_error", "slope", "residual_slope",
    "t_takeoff", "mu_takeoff",
)


def fmt(value) -> str:
    """Shortest text that reproduces the float bit pattern exactly."""
    return "%.17g" % float(value)


# --------------------------------------------------------------------------
# binary dumps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Dump:
    """Decoded binary dump."""

    code: int
    dimension: int
    nx: int
    ny: int
    time: float
    mu: float
    eps: float
    planes: tuple

    @property
    def is_modulation(self) -> bool:
        return self.code > _MODULATION_OFFSET

    @property
    def model_id(self) -> str:
        base = self.code - _MODULATION_OFFSET if self.is_modulation else self.code
        try:
            return _CODE_MODELS[base]
        except KeyError:
            raise ValueError(f"unknown model code {self.code}") from None

    def amplitudes(self) -> tuple:
        """Recombine (real, imaginary) plane pairs of a modulation dump."""
        if not self.is_modulation:
            raise ValueError("a physical-state dump stores no complex amplitudes")
        if len(self.planes) % 2:
            raise ValueError("modulation dump with an odd number of planes")
        return tuple(
            self.planes[i] + 1j * self.planes[i + 1]
            for i in range(0, len(self.planes), 2)
        )


def _shape_of(dimension: int, nx: int, ny: int):
    return (nx,) if dimension == 1 else (nx, ny)


def _write_dump(path, code: int, dimension: int, nx: int, ny: int,
                time: float, mu: float, eps: float, planes) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(code, len(planes), dimension, nx, ny,
                              float(time), float(mu), float(eps)))
        for plane in planes:
            arr = np.ascontiguousarray(plane, dtype="<f8")
            if arr.shape != _shape_of(dimension, nx, ny):
                raise ValueError(
                    f"plane shape {arr.shape} does not match header "
                    f"{_shape_of(dimension, nx, ny)}"
                )
            fh.write(arr.tobytes(order="C"))


def write_field_dump(path, model_id: str, state: FieldState) -> None:
    code = _MODEL_CODES[model_id]
    grid = state.grid
    ny = grid.n_y if (grid.dimension == 2 and grid.n_y) else (
        grid.n_points if grid.dimension == 2 else 1
    )
    _write_dump(path, code, grid.dimension, grid.n_points, ny,
                state.time, state.mu, state.eps, state.components)


def write_modulation_dump(path, state) -> None:
    code = _MODEL_CODES[state.track.model_id] + _MODULATION_OFFSET
    grid = state.grid
    ny = grid.n_points if grid.dimension == 2 else 1
    planes = []
    for amp in state.amplitudes:
        planes.append(np.real(amp))
        planes.append(np.imag(amp))
    tbar = state.tbar
    _write_dump(path, code, grid.dimension, grid.n_points, ny, tbar,
                state.track.mu_bar(tbar), state.track.rho(tbar), planes)


def read_dump(path) -> Dump:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a field dump (magic {magic!r})")
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        code, n_planes, dimension, nx, ny, time, mu, eps = _HEADER.unpack(header)
        shape = _shape_of(dimension, nx, ny)
        count = int(np.prod(shape))
        planes = []
        for _ in range(n_planes):
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise ValueError(f"{path}: truncated plane data")
            planes.append(np.frombuffer(raw, dtype="<f8").reshape(shape))
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after the last plane")
    return Dump(code=code, dimension=dimension, nx=nx, ny=ny, time=time,
                mu=mu, eps=eps, planes=tuple(planes))


# --------------------------------------------------------------------------
# CSV payloads
# --------------------------------------------------------------------------


def write_csv(path, header, rows) -> None:
    """Write rows of floats (or empty cells) under a fixed header."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_timeseries_csv(path, trajectory) -> None:
    """Physical run time series: t, mu, and the sup-norm of each component."""
    states = getattr(trajectory, "states", trajectory)
    n_comp = len(states[0].components) if states else 0
    header = ["t", "mu"] + [f"sup_{i + 1}" for i in range(n_comp)]
    rows = [
        [s.time, s.mu] + [float(np.max(np.abs(c))) for c in s.components]
        for s in states
    ]
    write_csv(path, header, rows)


def write_modulation_csv(path, states) -> None:
    """Envelope run time series: slow time, linear drift coefficient, and
    per-amplitude mass (real and imaginary parts) and sup-norm."""
    from .modulation import mass

    states = getattr(states, "states", states)
    n_amp = len(states[0].amplitudes) if states else 0
    header = ["t", "drift"]
    for i in range(n_amp):
        header += [f"mass_{i + 1}_re", f"mass_{i + 1}_im", f"sup_{i + 1}"]
    rows = []
    for s in states:
        row = [s.tbar, s.track.linear_drift(s.tbar)]
        masses = mass(s)
        for amp, m in zip(s.amplitudes, masses):
            row += [m.real, m.imag, float(np.max(np.abs(amp)))]
        rows.append(row)
    write_csv(path, header, rows)


def write_error_report_csv(path, rows) -> None:
    """Validation summary rows; absent quantities are empty cells.

    Each row is a mapping with any of the :data:`ERROR_REPORT_COLUMNS` keys.
    """
    payload = [[row.get(col) for col in ERROR_REPORT_COLUMNS] for row in rows]
    write_csv(path, ERROR_REPORT_COLUMNS, payload)


def write_plot_xy(path, xs, ys, *, labels=("x", "y")) -> None:
    """Two-column plot-data file for external plotting."""
    if len(xs) != len(ys):
        raise ValueError(f"x/y length mismatch: {len(xs)} vs {len(ys)}")
    write_csv(path, labels, zip(xs, ys))


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------


def write_manifest(path, config_text: str, version: str, fingerprint: str) -> None:
    """Config echo plus provenance comments; re-parses to the same config."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# driftlab {version}\n")
        fh.write(f"# platform: {fingerprint}\n")
        fh.write(config_text)
        if not config_text.endswith("\n"):
            fh.write("\n")
