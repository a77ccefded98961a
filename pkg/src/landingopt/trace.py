"""Per-iteration traces and end-of-run reports, with CSV/JSON round-trips."""

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple, Optional

import numpy as np

CSV_HEADER = ("iter", "f_val", "grad_norm", "gap", "merit", "dist_s", "wall_ns")


class TraceRecord(NamedTuple):
    iter: int
    f_val: float
    grad_norm: float
    gap: float
    merit: Optional[float] = None
    dist_s: Optional[float] = None
    wall_ns: int = 0


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _parse_float(s):
    return None if s == "" else float(s)


class IterateTrace:
    """In-memory trace; also a valid trace sink (``record``)."""

    def __init__(self, records=None):
        self.records = list(records or [])

    def record(self, rec: TraceRecord):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __eq__(self, other):
        return isinstance(other, IterateTrace) and self.records == other.records

    def column(self, name):
        vals = [getattr(r, name) for r in self.records]
        return np.array([np.nan if v is None else v for v in vals], dtype=float)

    def has(self, name):
        return bool(self.records) and all(getattr(r, name) is not None for r in self.records)

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        for rec in self.records:
            buf.write(",".join(_fmt(v) for v in rec) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text):
        if "\n" in str(path_or_text):
            text = str(path_or_text)
        else:
            with open(path_or_text, newline="") as fh:
                text = fh.read()
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        records = []
        for row in reader:
            if not row:
                continue
            records.append(
                TraceRecord(
                    int(row[0]),
                    float(row[1]),
                    float(row[2]),
                    float(row[3]),
                    _parse_float(row[4]),
                    _parse_float(row[5]),
                    int(row[6]),
                )
            )
        return cls(records)


class NullSink:
    def record(self, rec):
        pass


@dataclass
class RunReport:
    algorithm: str
    config: dict
    exit_reason: str
    n_iter: int
    final: dict
    instance_hash: Optional[str] = None
    seed: Optional[int] = None
    rng: Optional[str] = None
    backend: Optional[str] = None
    flops_per_iter: int = 0
    wall_time_s: float = 0.0
    rate: Optional[dict] = None
    constants: Optional[dict] = None
    checks: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)
    x_final: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def ok(self):
        return self.exit_reason in ("converged", "max_iter")

    def to_dict(self):
        d = asdict(self)
        d.pop("x_final")
        return d

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)} - {"x_final"}
        return cls(**{k: v for k, v in d.items() if k in names})

    @classmethod
    def from_json(cls, path_or_text):
        text = str(path_or_text)
        if not text.lstrip().startswith("{"):
            with open(path_or_text) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


class RateFitError(ValueError):
    pass


FIT_FLOOR = 1e-300


def fit_linear_rate(trace, metric="grad_norm", window=0.5, min_points=10):
    """Least-squares fit of ln(metric) against iteration over the tail ``window``.

    Returns a dict with slope (per-iteration log contraction), intercept,
    r_squared, the window bounds and a ``flag``: None, 'degenerate' (constant
    series, R^2 undefined) or 'converged below float range' (values clamped
    at 1e-300).
    """
    if not 0 < window <= 1:
        raise RateFitError("window must lie in (0, 1]")
    its = trace.column("iter")
    vals = trace.column(metric)
    start = int(np.floor(len(vals) * (1.0 - window)))
    its, vals = its[start:], vals[start:]
    if np.any(np.isnan(vals)):
        raise RateFitError(f"metric '{metric}' is missing from the trace")
    if len(vals) < min_points:
        raise RateFitError(f"need at least {min_points} points in the window, got {len(vals)}")
    flag = None
    if np.any(vals < FIT_FLOOR):
        flag = "converged below float range"
        vals = np.maximum(vals, FIT_FLOOR)
    y = np.log(vals)
    xm = its - its.mean()
    ym = y - y.mean()
    sxx = float(xm @ xm)
    slope = float(xm @ ym) / sxx
    intercept = float(y.mean() - slope * its.mean())
    ss_tot = float(ym @ ym)
    resid = ym - slope * xm
    ss_res = float(resid @ resid)
    if ss_tot <= 1e-30 * max(1.0, float(y @ y)):
        r2 = None
        flag = flag or "degenerate"
    else:
        r2 = 1.0 - ss_res / ss_tot
    return {
        "metric": metric,
        "slope": slope,
        "intercept": intercept,
        "r_squared": r2,
        "window": window,
        "first_iter": int(its[0]),
        "last_iter": int(its[-1]),
        "n": int(len(vals)),
        "flag": flag,
    }
