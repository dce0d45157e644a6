"""Simulation logs, CSV emission and plot-script generation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BtbError

CSV_FORMAT_VERSION = "btbsim-log/1"

#: Columns written to CSV, in order.
CSV_COLUMNS = (
    "t", "v_dc", "i_dc_g", "i_dc_m", "p_g", "q_g", "p_m", "q_m",
    "v_g_mag", "v_g_ang", "v_m_mag", "v_m_ang", "e_g_d", "e_g_q", "e_m_d", "e_m_q",
)
STATE_COLUMNS = ("gsc_i_d", "gsc_i_q", "gsc_pi_integral", "msc_i_d", "msc_i_q", "v_dc")
#: Every column of an in-memory log.  ``w_dc`` is the energy drawn from the
#: DC link by both converters since t = 0, integrated by the run's own scheme.
LOG_COLUMNS = CSV_COLUMNS + (
    "p_dc_g", "p_dc_m", "gsc_i_d", "gsc_i_q", "gsc_pi_integral", "msc_i_d", "msc_i_q", "w_dc",
)

CSV_HEADER = ",".join(CSV_COLUMNS)


@dataclass
class SimulationLog:
    """Column-oriented time series; ``log["v_dc"]`` returns a numpy array."""

    columns: dict[str, np.ndarray] = field(default_factory=dict)
    source: str = ""

    @classmethod
    def from_rows(cls, rows, source: str = "") -> SimulationLog:
        arr = np.asarray(rows, dtype=float).reshape(-1, len(LOG_COLUMNS))
        return cls({name: arr[:, j].copy() for j, name in enumerate(LOG_COLUMNS)}, source)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __len__(self) -> int:
        return len(self.columns["t"]) if self.columns else 0

    @property
    def t(self) -> np.ndarray:
        return self.columns["t"]

    def states(self, index: int = -1) -> dict[str, float]:
        return {name: float(self.columns[name][index]) for name in STATE_COLUMNS}

    def at(self, t: float) -> int:
        """Row index closest to time ``t``."""
        return int(np.argmin(np.abs(self.t - t)))


def write_csv(log: SimulationLog, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# {CSV_FORMAT_VERSION}\n")
        fh.write(CSV_HEADER + "\n")
        data = np.column_stack([log.columns[c] for c in CSV_COLUMNS]) if len(log) else []
        for row in data:
            fh.write(",".join(f"{x:.9g}" for x in row) + "\n")
    return path


def read_csv(path) -> SimulationLog:
    """Read a CSV written by :func:`write_csv` (only the CSV columns)."""
    path = Path(path)
    with path.open(newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines or lines[0] != f"# {CSV_FORMAT_VERSION}":
        raise BtbError(f"{path}: missing or unsupported format line (expected '# {CSV_FORMAT_VERSION}')")
    if len(lines) < 2 or lines[1] != CSV_HEADER:
        raise BtbError(f"{path}: malformed CSV header")
    rows = list(csv.reader(lines[2:]))
    if not rows:
        raise BtbError(f"{path}: CSV contains no data rows")
    arr = np.array(rows, dtype=float)
    return SimulationLog({c: arr[:, j] for j, c in enumerate(CSV_COLUMNS)}, str(path))


# --- comparison ------------------------------------------------------------

COMPARE_COLUMNS = ("v_dc", "i_dc_g", "i_dc_m", "p_g", "q_g", "p_m", "q_m")


def align(a: SimulationLog, b: SimulationLog) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of ``a`` and ``b`` at common time stamps."""
    ta = np.round(a.t, 9)
    tb = np.round(b.t, 9)
    common, ia, ib = np.intersect1d(ta, tb, return_indices=True)
    if common.size == 0:
        raise BtbError("logs share no time stamps")
    return ia, ib


def deviation_report(a: SimulationLog, b: SimulationLog, columns=COMPARE_COLUMNS) -> dict[str, tuple[float, float]]:
    """Max and RMS absolute deviation per column over common time stamps."""
    ia, ib = align(a, b)
    out = {}
    for c in columns:
        d = a[c][ia] - b[c][ib]
        out[c] = (float(np.max(np.abs(d))), float(math.sqrt(np.mean(d * d))))
    return out


def settling_time(log: SimulationLog, t_event: float, t_end: float, target: float,
                  band: float = 1.0, column: str = "v_dc") -> float | None:
    """Time after ``t_event`` until ``column`` stays within ``target +/- band``.

    Only samples in ``[t_event, t_end)`` count.  Returns None if the signal
    is still outside the band at the end of the window.
    """
    t = log.t
    sel = (t >= t_event - 1e-9) & (t < t_end - 1e-9)
    tw = t[sel]
    if tw.size == 0:
        raise ValueError(f"no samples in [{t_event}, {t_end})")
    outside = np.nonzero(np.abs(log[column][sel] - target) > band)[0]
    if outside.size == 0:
        return 0.0
    last = outside[-1]
    if last == tw.size - 1:
        return None
    return float(tw[last + 1] - t_event)


# --- plot script -----------------------------------------------------------

_PLOT_TEMPLATE = '''\
"""Plot {csv_name} as three stacked panels. Generated by btbsim."""
import matplotlib.pyplot as plt
import numpy as np

data = np.genfromtxt({csv_path!r}, delimiter=",", names=True, comments="#")
t = data["t"]

fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 8))
axes[0].plot(t, data["v_dc"])
axes[0].set_ylabel("V_dc [V]")
{panels}
axes[-1].set_xlabel("time [s]")
for ax in axes:
    ax.grid(True)
fig.tight_layout()
fig.savefig({png_path!r}, dpi=150)
plt.show()
'''

_PANELS = {
    "currents": (("i_dc_m", "I_dc-m [A]"), ("i_dc_g", "I_dc-g [A]")),
    "powers": (("p_g", "P_g [W]"), ("p_m", "P_m [W]")),
}


def choose_panels(log: SimulationLog) -> str:
    """``"powers"`` when the microgrid-side power reverses sign, else ``"currents"``."""
    p = log["p_m"]
    scale = max(float(np.max(np.abs(p))), 1.0)
    return "powers" if (p.max() > 1e-3 * scale and p.min() < -1e-3 * scale) else "currents"


def emit_plot_script(csv_path, out_path=None, panels: str = "auto") -> Path:
    """Write a matplotlib script plotting V_dc plus DC currents or AC powers."""
    csv_path = Path(csv_path)
    log = read_csv(csv_path)
    if panels == "auto":
        panels = choose_panels(log)
    if panels not in _PANELS:
        raise ValueError(f"panels must be 'auto', 'currents' or 'powers', got {panels!r}")
    body = []
    for k, (col, label) in enumerate(_PANELS[panels], start=1):
        body.append(f'axes[{k}].plot(t, data["{col}"])')
        body.append(f'axes[{k}].set_ylabel("{label}")')
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".plot.py")
    out_path.write_text(
        _PLOT_TEMPLATE.format(
            csv_name=csv_path.name,
            csv_path=str(csv_path.resolve()),
            png_path=str(csv_path.resolve().with_suffix(".png")),
            panels="\n".join(body),
        )
    )
    return out_path
