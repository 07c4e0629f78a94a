"""Conservative counterfactual curves.

Given an observed pair ``(A, Y)`` and a family of laws ``F_a``, the
conservative counterfactual at treatment ``a`` is ``F_a^-1(F_A(Y))``: the
observation keeps its rank ``tau = F_A(Y)`` as the treatment changes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .counterfactual import CdfField
from .dist1d import Dist1D


@dataclass(frozen=True, eq=False)
class ConservativeCurve:
    a_grid: np.ndarray
    values: np.ndarray
    anchor: tuple
    tau: float
    anchor_value: float
    flags: tuple = ()

    def anchor_error(self) -> float:
        """|y*(A) - Y| evaluated at the observed treatment itself."""
        return abs(self.anchor_value - self.anchor[1])

    def to_dict(self) -> dict:
        return {
            "a_grid": np.asarray(self.a_grid).tolist(),
            "values": np.asarray(self.values).tolist(),
            "anchor": [float(v) for v in self.anchor],
            "tau": float(self.tau),
            "anchor_value": float(self.anchor_value),
            "flags": list(self.flags),
        }


def _curve(field: CdfField, law_obs: Dist1D, a_obs: float, y_obs: float,
           values: np.ndarray) -> ConservativeCurve:
    flags = []
    if not field.covers(a_obs):
        flags.append("anchor treatment outside a_grid" + (
            "" if field.law_fn is not None else "; nearest endpoint law used"))
    tau = float(np.clip(law_obs.cdf_at(y_obs), 0.0, 1.0))
    return ConservativeCurve(field.a_grid, values, (float(a_obs), float(y_obs)), tau,
                             float(law_obs.quantile_at(tau)), tuple(flags))


def conservative_curve(field: CdfField, a_obs: float, y_obs: float) -> ConservativeCurve:
    """Curve ``a -> F_a^-1(F_A(Y))`` on the field's grid for one observation.

    Notes
    -----
    The rank is computed under the law at the observed treatment itself
    when the field can evaluate off-grid treatments, and under the nearest
    grid endpoint law (with a flag) otherwise. Because ``F^-1(F(y)) = y``
    whenever ``y`` is in the support, ``anchor_value`` reproduces ``y_obs``
    for in-support observations.
    """
    return conservative_curves(field, [a_obs], [y_obs])[0]


def conservative_curves(field: CdfField, a_obs, y_obs) -> list[ConservativeCurve]:
    """Batch version of :func:`conservative_curve` for many observations."""
    a_obs = np.atleast_1d(np.asarray(a_obs, dtype=float))
    y_obs = np.atleast_1d(np.asarray(y_obs, dtype=float))
    if a_obs.shape != y_obs.shape:
        raise ValueError("a_obs and y_obs must have equal length")
    if field.law_fn is None:
        laws = field.laws_at(np.clip(a_obs, field.a_grid[0], field.a_grid[-1]))
    else:
        laws = field.laws_at(a_obs)
    taus = np.clip([law.cdf_at(y) for law, y in zip(laws, y_obs)], 0.0, 1.0)
    Q = field.quantiles(taus)  # (n_a, n_obs)
    return [_curve(field, law, a, y, Q[:, k])
            for k, (law, a, y) in enumerate(zip(laws, a_obs, y_obs))]


def conditional_conservative_curve(fields: dict, v, a_obs: float, y_obs: float) -> ConservativeCurve:
    """Conservative curve within the stratum ``V = v``.

    ``fields`` maps each stratum value to the field of conditional laws
    ``F_{a|v}``.
    """
    if v not in fields:
        raise KeyError(f"unknown stratum {v!r}; known: {sorted(fields)}")
    return conservative_curve(fields[v], a_obs, y_obs)


def impute_binary(F0: Dist1D, F1: Dist1D, a_obs: int, y_obs: float) -> float:
    """Missing potential outcome of a binary-treatment unit by rank matching."""
    if a_obs not in (0, 1):
        raise ValueError("binary treatment must be 0 or 1")
    src, dst = (F0, F1) if a_obs == 0 else (F1, F0)
    return float(dst.quantile_at(float(np.clip(src.cdf_at(y_obs), 0.0, 1.0))))
