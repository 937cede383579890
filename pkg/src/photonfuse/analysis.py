"""Loss-tolerance thresholds and parameter sweeps.

Tree-cluster encoding tolerates loss when (1 - eps) * eta_d > 1/2, with eps the
per-qubit loss rate of the heralded resource state.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from .sources import (
    EmissionParams,
    LossParams,
    SourceParams,
    as_emission,
    loss_from_emission,
)

PRIOR_THRESHOLD = 2 / 3


class Unattainable(enum.Enum):
    UNATTAINABLE = "unattainable"

    def __str__(self) -> str:
        return self.value


UNATTAINABLE = Unattainable.UNATTAINABLE
Threshold = Union[float, Unattainable]


def threshold_eta_d_min(f_a: float) -> Threshold:
    """Smallest detector efficiency that still tolerates loss, 1 / (2 (1 - f_a))."""
    if not (math.isfinite(f_a) and 0.0 <= f_a < 1.0):
        raise ValueError(f"f_a must lie in [0, 1), got {f_a}")
    if f_a >= 0.5:
        return UNATTAINABLE
    return 1 / (2 * (1 - f_a))


def threshold_from_kappa(kappa: float) -> Threshold:
    """Same threshold written through kappa = eta_b / eta_s: (kappa + 1) / 2."""
    if not (math.isfinite(kappa) and kappa >= 0):
        raise ValueError(f"kappa must be a non-negative number, got {kappa}")
    if kappa >= 1:
        return UNATTAINABLE
    return (kappa + 1) / 2


def beats_prior(eta_d_min: Threshold) -> bool:
    return eta_d_min is not UNATTAINABLE and eta_d_min < PRIOR_THRESHOLD


@dataclass(frozen=True)
class ThresholdReport:
    epsilon: float
    eta_d: float
    tolerant: bool
    eta_d_min: Threshold
    kappa: float
    margin: float
    sim_epsilon: Optional[float] = None
    sim_residual: Optional[float] = None


def tolerance_report(source: SourceParams, eta_d: float, simulate: bool = False) -> ThresholdReport:
    """Threshold status of one operating point.

    With ``simulate`` the loss rate is also fitted from a full protocol run.
    """
    if not 0.0 < eta_d <= 1.0:
        raise ValueError(f"eta_d must lie in (0, 1], got {eta_d}")
    e = as_emission(source)
    if e.eta_s <= 0:
        raise ValueError("eta_s must be positive")
    eps = source.f_a if isinstance(source, LossParams) else e.eta_b / (e.eta_b + e.eta_s)
    margin = (1 - eps) * eta_d - 0.5
    sim_eps = sim_res = None
    if simulate:
        from .protocol import ProtocolConfig, id_decompose, step2_fuse

        dec = id_decompose(step2_fuse(ProtocolConfig(e, eta_d)).rho_r)
        sim_eps, sim_res = dec.epsilon, dec.residual
    return ThresholdReport(
        epsilon=eps,
        eta_d=eta_d,
        tolerant=margin > 0,
        eta_d_min=threshold_eta_d_min(eps),
        kappa=e.eta_b / e.eta_s,
        margin=margin,
        sim_epsilon=sim_eps,
        sim_residual=sim_res,
    )


GRID_VARS = ("f_c", "f_a", "f_b", "eta_s", "eta_a", "eta_b", "eta_d")
DEFAULT_GRID = "f_a=0:0.49:0.01"
CSV_COLUMNS = ("f_a", "kappa", "epsilon", "eta_d_min", "p_success", "tolerant", "margin")


def parse_grid(spec: str) -> tuple[str, list[float]]:
    """``"var=start:stop:step"`` (stop inclusive) or ``"var=v1,v2,..."``."""
    var, sep, body = spec.partition("=")
    var = var.strip()
    if not sep or var not in GRID_VARS:
        raise ValueError(f"grid must look like 'var=start:stop:step' with var in {GRID_VARS}, got {spec!r}")
    if ":" in body:
        try:
            start, stop, step = (float(x) for x in body.split(":"))
        except ValueError as exc:
            raise ValueError(f"malformed range in grid {spec!r}") from exc
        if step <= 0 or stop < start:
            raise ValueError(f"grid range must satisfy start <= stop and step > 0: {spec!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [round(start + i * step, 12) for i in range(n)]
    else:
        values = [float(x) for x in body.split(",") if x.strip()]
    if not values:
        raise ValueError(f"empty grid {spec!r}")
    return var, values


def _point_params(base: SourceParams, point: Mapping[str, float]) -> SourceParams:
    src = {k: v for k, v in point.items() if k != "eta_d"}
    if not src:
        return base
    if all(k.startswith("f_") for k in src):
        b = base if isinstance(base, LossParams) else loss_from_emission(base)
        return LossParams(**{**b.as_dict(), **src})
    if all(k.startswith("eta_") for k in src):
        return EmissionParams(**{**as_emission(base).as_dict(), **src})
    raise ValueError("a grid cannot mix f_* and eta_* source variables")


def sweep(
    grid: Mapping[str, Sequence[float]],
    base: SourceParams = LossParams(),
    eta_d: float = 1.0,
    simulate: bool = False,
) -> list[dict]:
    """One row per grid point (Cartesian product, first variable slowest)."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("empty grid")
    from .protocol import success_probability

    names = list(grid)
    rows = []
    for values in itertools.product(*(grid[n] for n in names)):
        point = dict(zip(names, values))
        params = _point_params(base, point)
        ed = point.get("eta_d", eta_d)
        rep = tolerance_report(params, ed, simulate=simulate)
        row = {
            "f_a": rep.epsilon,
            "kappa": rep.kappa,
            "epsilon": rep.epsilon,
            "eta_d_min": rep.eta_d_min,
            "p_success": success_probability(params, ed),
            "tolerant": rep.tolerant,
            "margin": rep.margin,
        }
        if simulate:
            row["sim_epsilon"] = rep.sim_epsilon
            row["sim_residual"] = rep.sim_residual
        row["eta_d"] = ed
        row["improved"] = beats_prior(rep.eta_d_min)
        rows.append(row)
    return rows


def _cell(v) -> str:
    if isinstance(v, Unattainable):
        return v.value
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def rows_to_csv(rows: Iterable[dict]) -> str:
    rows = list(rows)
    buf = io.StringIO()
    if not rows:
        return ""
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(rows[0].keys())
    for r in rows:
        writer.writerow(_cell(v) for v in r.values())
    return buf.getvalue()


def to_jsonable(value):
    if isinstance(value, Unattainable):
        return value.value
    if isinstance(value, dict):
        return {k: to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def rows_to_json(rows: Iterable[dict]) -> str:
    return json.dumps(to_jsonable(list(rows)), indent=2)
