"""Periodic inlet flow waveforms.

A waveform is either a truncated Fourier series (mean plus harmonics) or a
sampled table extended periodically by linear interpolation.  Instances are
immutable, validated for strict positivity at construction, and callable, so
any plain ``t -> Q`` function can stand in for one where a solver argument
expects an inflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: Samples per period used for the construction-time positivity scan.
VALIDATION_SAMPLES = 10_000


class WaveformError(ValueError):
    """Raised for non-positive or structurally invalid waveforms."""


@dataclass(frozen=True)
class InflowWaveform:
    """Periodic inlet flow Qin(t) in m^3/s with period T in seconds.

    Exactly one of the two representations is active: ``harmonics`` (list of
    ``(order, cos_amp, sin_amp)`` rows on top of ``mean``) or ``table``
    (``(t, q)`` sample pairs covering one period, wrapped periodically).
    """

    period: float
    mean: float = 0.0
    harmonics: tuple[tuple[int, float, float], ...] = ()
    table: tuple[tuple[float, float], ...] = ()

    _table_t: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _table_q: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.period <= 0.0:
            raise WaveformError("period must be positive")
        if self.table and self.harmonics:
            raise WaveformError("waveform is either harmonic or tabulated, not both")
        if self.table:
            t = np.array([row[0] for row in self.table], dtype=float)
            q = np.array([row[1] for row in self.table], dtype=float)
            if len(t) < 2:
                raise WaveformError("table needs at least two samples")
            if np.any(np.diff(t) <= 0.0):
                raise WaveformError("table times must be strictly increasing")
            if t[0] < 0.0 or t[-1] >= self.period:
                raise WaveformError("table times must lie in [0, period)")
            # Wrap the last segment around to t[0] + period for interpolation.
            object.__setattr__(self, "_table_t", np.concatenate([t, [t[0] + self.period]]))
            object.__setattr__(self, "_table_q", np.concatenate([q, [q[0]]]))
        ts = np.linspace(0.0, self.period, VALIDATION_SAMPLES, endpoint=False)
        qs = self(ts)
        if not np.all(qs > 0.0):
            raise WaveformError(
                f"waveform must be strictly positive; min {qs.min():.3e} at "
                f"t={ts[np.argmin(qs)]:.4f} s")

    def __call__(self, t):
        return self.evaluate(t)

    def evaluate(self, t):
        """Flow at time t (scalar or array), periodically extended."""
        w = 2.0 * math.pi / self.period
        if not self.table and np.ndim(t) == 0:
            t = float(t)
            out = self.mean
            for k, ak, bk in self.harmonics:
                out += ak * math.cos(w * k * t) + bk * math.sin(w * k * t)
            return out
        t = np.asarray(t, dtype=float)
        if self.table:
            tau = np.mod(t - self._table_t[0], self.period) + self._table_t[0]
            out = np.interp(tau, self._table_t, self._table_q)
        else:
            out = np.full_like(t, self.mean, dtype=float)
            for k, ak, bk in self.harmonics:
                out = out + ak * np.cos(w * k * t) + bk * np.sin(w * k * t)
        return out if out.ndim else float(out)

    def peak_time(self) -> float:
        """Time of the maximum flow within one period (dense-grid argmax)."""
        ts = np.linspace(0.0, self.period, VALIDATION_SAMPLES, endpoint=False)
        return float(ts[np.argmax(self(ts))])


def default_waveform() -> InflowWaveform:
    """Heartbeat-scale synthetic inflow: period 0.8 s, systolic peak ~0.12 s.

    Three harmonics on a 3.2e-5 m^3/s mean, tuned so the extrema stay inside
    [1.6e-5, 7e-5] m^3/s.
    """
    return InflowWaveform(
        period=0.8,
        mean=3.2e-5,
        harmonics=(
            (1, 1.03418e-05, 1.42339e-05),
            (2, -3.78220e-06, 1.16415e-05),
            (3, -5.88350e-06, 1.91180e-06),
        ),
    )


def parse_waveform_text(text: str) -> InflowWaveform:
    """Parse the waveform file format.

    Structured text, one statement per line; ``#`` starts a comment.  Keys:

    * ``period = <seconds>``
    * ``mean = <m^3/s>``                      (harmonic form)
    * ``harmonic = <k>, <cos_amp>, <sin_amp>`` (repeatable)
    * ``table`` on its own line starts a block of ``<t>, <q>`` rows that
      runs to the end of file.
    """
    period = None
    mean = 0.0
    harmonics: list[tuple[int, float, float]] = []
    table: list[tuple[float, float]] = []
    in_table = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if in_table:
            parts = [s.strip() for s in line.split(",")]
            if len(parts) != 2:
                raise WaveformError(f"line {lineno}: table rows are 't, q'")
            table.append((float(parts[0]), float(parts[1])))
            continue
        if line == "table":
            in_table = True
            continue
        if "=" not in line:
            raise WaveformError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "period":
            period = float(value)
        elif key == "mean":
            mean = float(value)
        elif key == "harmonic":
            parts = [s.strip() for s in value.split(",")]
            if len(parts) != 3:
                raise WaveformError(f"line {lineno}: harmonic rows are 'k, a_k, b_k'")
            harmonics.append((int(parts[0]), float(parts[1]), float(parts[2])))
        else:
            raise WaveformError(f"line {lineno}: unknown key {key!r}")
    if period is None:
        raise WaveformError("waveform file must set 'period'")
    if table:
        return InflowWaveform(period=period, table=tuple(table))
    return InflowWaveform(period=period, mean=mean, harmonics=tuple(harmonics))


def load_waveform(path) -> InflowWaveform:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_waveform_text(fh.read())
