"""
Report types produced by the assumption checks, the quadrature routines and
the verification harness.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class QuadratureResult:
    """
    Outcome of a box-doubling quadrature.

    ``diverged`` is set when growth of the integrand was detected; ``radius``
    is then the box radius at which it was seen.
    """

    value: float
    converged: bool
    diverged: bool = False
    radius: float = float("nan")
    boundary_ratio: float = float("nan")
    diagnostic: str = ""

    @property
    def finite(self) -> bool:
        return self.converged and not self.diverged and math.isfinite(self.value)


@dataclass
class AssumptionReport:
    """Sampled evidence for the standing assumptions on K~ and V."""

    radii_checked: List[float]
    ktilde_min_at_radius: List[float]
    theta_integrals: Dict[float, QuadratureResult]
    branch_detected: str
    ratio_traces: Dict[str, List[float]]
    ratio_slopes: Dict[str, float]
    verdict: str
    diagnostics: List[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """Flat table: one row per radius with the minimum of K~ and every ratio."""
        data: Dict[str, Any] = {
            "radius": self.radii_checked,
            "ktilde_min": self.ktilde_min_at_radius,
        }
        for name, trace in self.ratio_traces.items():
            data[name] = trace
        return pd.DataFrame(data)

    def verdict_line(self) -> str:
        integrals = ",".join(
            f"{theta:g}:{res.value:.6g}" for theta, res in sorted(self.theta_integrals.items())
        )
        return (
            f"assumptions verdict={self.verdict} branch={self.branch_detected} "
            f"theta_integrals={integrals}"
        )


@dataclass
class ConvergenceReport:
    """
    Outcome of one verification check.

    The status is a pure function of the recorded rows, the slope data and
    the inconclusive reason; ``decide`` recomputes it from those fields alone.
    """

    name: str
    times: List[float]
    lhs: List[float]
    rhs: List[float]
    errors: List[float]
    tolerances: List[float]
    checked: List[bool]
    predicted: Optional[float] = None
    fitted_slope: Optional[float] = None
    slope_bounds: Optional[Tuple[float, float]] = None
    monotone_from: Optional[int] = None
    monotone_until: Optional[int] = None
    fitted_c0: Optional[float] = None
    fitted_t0: Optional[float] = None
    inconclusive_reason: str = ""
    notes: Dict[str, Any] = field(default_factory=dict)
    status: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = self.decide()

    def decide(self) -> str:
        """Re-derive the pass/fail/inconclusive status from the recorded values."""
        if self.inconclusive_reason:
            return INCONCLUSIVE
        ok = all(
            abs(err) <= tol
            for err, tol, used in zip(self.errors, self.tolerances, self.checked)
            if used
        )
        if self.slope_bounds is not None:
            lo, hi = self.slope_bounds
            ok = ok and self.fitted_slope is not None and lo <= self.fitted_slope <= hi
        if self.monotone_from is not None:
            tail = [abs(e) for e in self.errors[self.monotone_from:self.monotone_until]]
            ok = ok and all(b < a for a, b in zip(tail, tail[1:]))
        return PASS if ok else FAIL

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.times,
                "lhs": self.lhs,
                "rhs": self.rhs,
                "error": self.errors,
                "tolerance": self.tolerances,
                "checked": self.checked,
            }
        )

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ConvergenceReport":
        data = dict(data)
        if data.get("slope_bounds") is not None:
            data["slope_bounds"] = tuple(data["slope_bounds"])
        return cls(**data)

    def verdict_line(self) -> str:
        parts = [f"check={self.name}", f"status={self.status}"]
        if self.predicted is not None:
            parts.append(f"predicted={self.predicted:.6g}")
        if self.fitted_slope is not None:
            parts.append(f"slope={self.fitted_slope:.6g}")
        if self.lhs:
            parts.append(f"final_lhs={self.lhs[-1]:.6g}")
        if self.errors:
            parts.append(f"final_error={self.errors[-1]:.3g}")
        if self.inconclusive_reason:
            parts.append(f"reason={self.inconclusive_reason.replace(' ', '_')}")
        return " ".join(parts)


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays inside report notes to JSON-ready values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value
