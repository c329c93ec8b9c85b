"""Piecewise-linear time profiles for boundary influxes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PiecewiseLinear:
    """Piecewise-linear f(t) through (times, values); clamped outside the range."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.ndim != 1 or self.times.size < 1 or self.times.size != self.values.size:
            raise ValueError("times and values must be equal-length 1-d arrays")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("profile times must be strictly increasing")

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    def scaled(self, factor: float) -> "PiecewiseLinear":
        return PiecewiseLinear(self.times, factor * self.values)


@dataclass
class InfluxProfile:
    """Prescribed growth-factor influx histories q(t) [mol/mm^2/day].

    The default mimics endothelium damage and recovery: linear rise over the
    first 30 days, plateau until day 100, linear decay to zero at day 370,
    with the TGF-beta influx ten times the PDGF one.
    """

    times: np.ndarray
    q_P: np.ndarray
    q_T: np.ndarray

    @classmethod
    def default(cls, q_P_peak: float = 1.0e-19, q_T_peak: float = 1.0e-18,
                rise_end: float = 30.0, plateau_end: float = 100.0,
                decay_end: float = 370.0) -> "InfluxProfile":
        times = np.array([0.0, rise_end, plateau_end, decay_end])
        shape = np.array([0.0, 1.0, 1.0, 0.0])
        return cls(times=times, q_P=q_P_peak * shape, q_T=q_T_peak * shape)

    def flux_P(self) -> PiecewiseLinear:
        return PiecewiseLinear(self.times, self.q_P)

    def flux_T(self) -> PiecewiseLinear:
        return PiecewiseLinear(self.times, self.q_T)

    def ambient(self, p_en: float):
        """Ambient concentration profiles realizing these fluxes, cbar = q/p_en."""
        if p_en <= 0.0:
            raise ValueError("p_en must be positive to prescribe an influx")
        return (
            PiecewiseLinear(self.times, self.q_P / p_en),
            PiecewiseLinear(self.times, self.q_T / p_en),
        )
