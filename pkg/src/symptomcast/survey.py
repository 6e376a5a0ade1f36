"""Survey records, severity scoring, CSV ingest, and synthetic stream generation.

A survey record captures one questionnaire response: demographics, status
flags, the fixed 9-symptom panel, a planar location, and an integer day
index.  The per-responder severity score is the fraction of the symptom
panel reported.  Real data is read from CSV; a seeded synthetic generator
with a planted moving-hotspot outbreak substitutes for private survey
streams and also returns the ground-truth intensity field so downstream
experiments can be checked against it.
"""

from __future__ import annotations

import datetime as _dt
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "SYMPTOM_NAMES",
    "N_SYMPTOMS",
    "ENCODED_DIM",
    "CSV_HEADER",
    "DEFAULT_EPOCH",
    "SurveyRecord",
    "SyntheticConfig",
    "IntensityField",
    "RowError",
    "SurveyDataError",
    "compute_sra",
    "encode_record",
    "encode_records",
    "parse_survey_csv",
    "serialize_survey_csv",
    "generate_synthetic",
    "default_profile_mix",
]

# Fixed symptom panel; this order is the contract for CSV columns, record
# encoding, and serialization alike.
SYMPTOM_NAMES = (
    "cough",
    "fatigue",
    "myalgia",
    "short_breath",
    "rhinorrhea",
    "diarrhea",
    "headache",
    "chills",
    "confusion",
)
N_SYMPTOMS = len(SYMPTOM_NAMES)

# Canonical numeric encoding fed to profile learning:
# [age/120, gender, isolation, smoker, chronic, fever, 9 symptom flags].
ENCODED_DIM = 15

CSV_HEADER = (
    "date,x,y,age,gender,isolation,smoker,chronic,fever," + ",".join(SYMPTOM_NAMES)
)

DEFAULT_EPOCH = _dt.date(2020, 1, 1)

_FLAG_FIELDS = ("gender", "isolation", "smoker", "chronic", "fever")


class SurveyDataError(ValueError):
    """Fatal survey-data problem (missing header, invalid config)."""


@dataclass(frozen=True)
class RowError:
    """A rejected CSV row: 1-based row number (header is row 1) and reason."""

    row: int
    reason: str


@dataclass(frozen=True)
class SurveyRecord:
    """One questionnaire response.

    ``date`` is an integer day index counted from the dataset start;
    calendar dates exist only at the CSV boundary.  ``symptoms`` holds the
    9 panel flags in :data:`SYMPTOM_NAMES` order.
    """

    date: int
    x: float
    y: float
    age: float
    gender: int
    isolation: int
    smoker: int
    chronic: int
    fever: int
    symptoms: tuple[int, ...]

    def __post_init__(self):
        if not (0.0 <= self.age <= 120.0):
            raise ValueError(f"age out of range: {self.age!r}")
        for name in _FLAG_FIELDS:
            v = getattr(self, name)
            if v not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1, got {v!r}")
        if len(self.symptoms) != N_SYMPTOMS:
            raise ValueError(f"expected {N_SYMPTOMS} symptom flags, got {len(self.symptoms)}")
        if any(s not in (0, 1) for s in self.symptoms):
            raise ValueError("symptom flags must be 0 or 1")


def compute_sra(record: SurveyRecord) -> float:
    """Severity of one record: reported symptoms divided by the panel size."""
    return sum(record.symptoms) / N_SYMPTOMS


def encode_record(record: SurveyRecord) -> np.ndarray:
    """Encode a record as the canonical 15-vector with every entry in [0, 1]."""
    vec = np.empty(ENCODED_DIM, dtype=np.float64)
    vec[0] = record.age / 120.0
    vec[1] = record.gender
    vec[2] = record.isolation
    vec[3] = record.smoker
    vec[4] = record.chronic
    vec[5] = record.fever
    vec[6:] = record.symptoms
    return vec


def encode_records(records) -> np.ndarray:
    """Encode a sequence of records into an (N, 15) array."""
    if not records:
        return np.zeros((0, ENCODED_DIM), dtype=np.float64)
    return np.stack([encode_record(r) for r in records])


# ---------------------------------------------------------------------------
# CSV boundary


def _parse_row(fields: list[str], row_num: int) -> SurveyRecord | RowError:
    try:
        date = _dt.date.fromisoformat(fields[0])
    except ValueError:
        return RowError(row_num, f"bad date {fields[0]!r}")
    try:
        x = float(fields[1])
        y = float(fields[2])
        age = float(fields[3])
    except ValueError as exc:
        return RowError(row_num, str(exc))
    if not (0.0 <= age <= 120.0):
        return RowError(row_num, "age out of range")
    flags = []
    for name, raw in zip(_FLAG_FIELDS + SYMPTOM_NAMES, fields[4:]):
        if raw not in ("0", "1"):
            return RowError(row_num, f"{name} must be 0 or 1, got {raw!r}")
        flags.append(int(raw))
    return SurveyRecord(
        date=date.toordinal(),  # rebased to a day index by the caller
        x=x,
        y=y,
        age=age,
        gender=flags[0],
        isolation=flags[1],
        smoker=flags[2],
        chronic=flags[3],
        fever=flags[4],
        symptoms=tuple(flags[5:]),
    )


def parse_survey_csv(stream, epoch: _dt.date | None = None):
    """Parse survey CSV into ``(records, row_errors)``.

    ``stream`` is a text or binary file object, or a str/bytes blob.  The
    exact documented header is required (fatal :class:`SurveyDataError`
    otherwise).  Malformed rows are reported as :class:`RowError` entries,
    never silently dropped.  Day indices are counted from ``epoch`` when
    given, else from the earliest date present in the file.
    """
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    elif isinstance(stream, io.RawIOBase) or isinstance(stream, io.BufferedIOBase):
        stream = io.TextIOWrapper(stream, encoding="utf-8")

    header = stream.readline().rstrip("\r\n")
    if header != CSV_HEADER:
        raise SurveyDataError(f"missing or malformed header; expected {CSV_HEADER!r}")

    n_cols = len(CSV_HEADER.split(","))
    parsed: list[SurveyRecord] = []
    errors: list[RowError] = []
    row_num = 1
    for line in stream:
        row_num += 1
        line = line.rstrip("\r\n")
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != n_cols:
            errors.append(RowError(row_num, f"expected {n_cols} fields, got {len(fields)}"))
            continue
        out = _parse_row(fields, row_num)
        if isinstance(out, RowError):
            errors.append(out)
        else:
            parsed.append(out)

    if not parsed:
        return [], errors
    base = epoch.toordinal() if epoch is not None else min(r.date for r in parsed)
    records = [replace(r, date=r.date - base) for r in parsed]
    return records, errors


def _fmt(x: float) -> str:
    # repr() of a float is the shortest string that round-trips exactly
    return repr(float(x))


def serialize_survey_csv(records, epoch: _dt.date = DEFAULT_EPOCH) -> str:
    """Serialize records to CSV text; day index d maps to ``epoch + d`` days."""
    lines = [CSV_HEADER]
    for r in records:
        date = epoch + _dt.timedelta(days=int(r.date))
        flags = [r.gender, r.isolation, r.smoker, r.chronic, r.fever, *r.symptoms]
        lines.append(
            ",".join([date.isoformat(), _fmt(r.x), _fmt(r.y), _fmt(r.age)]
                     + [str(v) for v in flags])
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Synthetic stream with a planted outbreak


# relative prevalence of the 9 panel symptoms, shared by every profile
_SYMPTOM_SHAPE = np.array([1.3, 1.2, 1.1, 0.9, 1.2, 0.7, 1.1, 0.8, 0.5])


def default_profile_mix(k: int = 4):
    """Built-in responder mix: ``k`` profiles differing in overall symptom level.

    All profiles share one symptom-prevalence shape and differ by a level
    factor (mild to sensitive groups).  Pooled per-symptom averages then
    collapse the profiles into a single confounded signal, while the
    per-profile breakdown keeps level and composition separable.
    """
    levels = np.linspace(0.06, 0.40, k) if k > 1 else np.array([0.22])
    return [(1.0 / k, np.clip(b * _SYMPTOM_SHAPE, 0.0, 1.0)) for b in levels]


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the synthetic survey stream.

    ``profile_mix`` is a list of ``(weight, propensity_vector)`` pairs with
    weights summing to 1 and 9 per-symptom propensities each.  Hotspot
    centers random-walk with per-day step length ``hotspot_drift``; the
    outbreak intensity is 1 plus ``hotspot_amplitude`` times a sum of
    Gaussian bumps of width ``hotspot_width``.  ``mix_tilt`` linearly skews
    the profile mix across the x axis (0 disables it); tilts are recentred
    so the population-average mix is unchanged.  Profile k responds to the
    intensity of ``response_lag[k % len]`` days earlier (symptom onset
    latency differs between groups), which makes the per-profile breakdown
    informative about the outbreak trajectory beyond the pooled mean.
    """

    days: int = 50
    grid_bounds: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    responses_per_day: int = 300
    n_hotspots: int = 2
    hotspot_drift: float = 0.05
    hotspot_width: float = 0.22
    hotspot_amplitude: float = 3.0
    mix_tilt: float = 0.3
    response_lag: tuple[int, ...] = (0, 1, 2)
    profile_mix: list = field(default_factory=default_profile_mix)
    seed: int = 0

    def validate(self):
        if self.days < 1 or self.responses_per_day < 1:
            raise SurveyDataError("days and responses_per_day must be >= 1")
        if self.n_hotspots < 0:
            raise SurveyDataError("n_hotspots must be >= 0")
        x0, x1, y0, y1 = self.grid_bounds
        if not (x0 < x1 and y0 < y1):
            raise SurveyDataError(f"degenerate grid_bounds {self.grid_bounds!r}")
        if self.hotspot_width <= 0 or self.hotspot_drift < 0 or self.hotspot_amplitude < 0:
            raise SurveyDataError("hotspot parameters must be non-negative (width > 0)")
        if not self.profile_mix:
            raise SurveyDataError("profile_mix must not be empty")
        w = sum(float(wk) for wk, _ in self.profile_mix)
        if abs(w - 1.0) > 1e-12:
            raise SurveyDataError(f"profile weights must sum to 1, got {w!r}")
        for _, p in self.profile_mix:
            p = np.asarray(p, dtype=np.float64)
            if p.shape != (N_SYMPTOMS,) or np.any(p < 0) or np.any(p > 1):
                raise SurveyDataError("each propensity vector needs 9 values in [0, 1]")
        if not (0.0 <= self.mix_tilt < 1.0):
            raise SurveyDataError("mix_tilt must be in [0, 1)")
        if not self.response_lag or any(l < 0 for l in self.response_lag):
            raise SurveyDataError("response_lag needs at least one non-negative entry")


@dataclass(frozen=True)
class IntensityField:
    """Ground-truth outbreak intensity: 1 + amplitude * sum of Gaussian bumps.

    ``centers`` has shape (days, n_hotspots, 2) holding (x, y) per day.
    """

    centers: np.ndarray
    width: float
    amplitude: float
    bounds: tuple[float, float, float, float]
    days: int

    def __call__(self, x, y, day):
        """Evaluate the intensity at planar points for one day index."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        lam = np.ones(np.broadcast(x, y).shape)
        if self.centers.shape[1] == 0:
            return lam
        for cx, cy in self.centers[day]:
            d2 = (x - cx) ** 2 + (y - cy) ** 2
            lam = lam + self.amplitude * np.exp(-d2 / (2.0 * self.width**2))
        return lam

    def to_grid(self, rows: int, cols: int) -> np.ndarray:
        """Sample the field at cell centers; returns (days, rows, cols)."""
        x0, x1, y0, y1 = self.bounds
        xs = x0 + (np.arange(cols) + 0.5) * (x1 - x0) / cols
        ys = y0 + (np.arange(rows) + 0.5) * (y1 - y0) / rows
        gx, gy = np.meshgrid(xs, ys)
        out = np.empty((self.days, rows, cols))
        for d in range(self.days):
            out[d] = self(gx, gy, d)
        return out


def _tilt_signs(weights: np.ndarray) -> np.ndarray:
    # alternate +/-1 and recentre so the weighted sum is exactly zero,
    # keeping the population-average mix equal to the nominal weights
    s = np.where(np.arange(len(weights)) % 2 == 0, 1.0, -1.0)
    return s - float(np.dot(weights, s))


def generate_synthetic(config: SyntheticConfig):
    """Generate a synthetic survey stream and its ground-truth intensity field.

    Deterministic under ``config.seed``.  Locations are uniform in the
    bounds; each record draws a profile (optionally tilted across x), then
    symptom flags as Bernoulli(propensity * intensity) clipped to [0, 1].

    Returns ``(records, field)`` where ``field`` is an
    :class:`IntensityField` for oracle use.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    x0, x1, y0, y1 = config.grid_bounds

    weights = np.array([w for w, _ in config.profile_mix], dtype=np.float64)
    props = np.stack([np.asarray(p, dtype=np.float64) for _, p in config.profile_mix])
    k = len(weights)
    signs = _tilt_signs(weights)
    tilt = config.mix_tilt / max(1.0, np.max(np.abs(signs)))
    # demographics identify the profiles: tight age bands plus a
    # near-deterministic status-flag codeword per profile
    age_centers = np.linspace(15.0, 105.0, k) if k > 1 else np.array([45.0])
    ks = np.arange(k)
    gender_rate = np.where(ks & 1, 0.95, 0.03)
    isolation_rate = np.where(ks & 2, 0.95, 0.03)
    smoker_rate = np.where(ks & 4, 0.95, 0.03)
    chronic_rate = np.where((ks & 1) ^ ((ks & 2) >> 1), 0.95, 0.03)
    fever_prop = 0.5 * props.mean(axis=1)

    # hotspot random walk: fixed-length steps with random headings,
    # reflected at the bounds
    centers = np.empty((config.days, config.n_hotspots, 2))
    if config.n_hotspots > 0:
        pos = np.column_stack(
            [rng.uniform(x0, x1, config.n_hotspots), rng.uniform(y0, y1, config.n_hotspots)]
        )
        for d in range(config.days):
            centers[d] = pos
            theta = rng.uniform(0.0, 2.0 * math.pi, config.n_hotspots)
            pos = pos + config.hotspot_drift * np.column_stack([np.cos(theta), np.sin(theta)])
            for j, (lo, hi) in enumerate(((x0, x1), (y0, y1))):
                span = hi - lo
                folded = np.mod(pos[:, j] - lo, 2.0 * span)
                pos[:, j] = lo + np.where(folded > span, 2.0 * span - folded, folded)

    field = IntensityField(
        centers=centers,
        width=config.hotspot_width,
        amplitude=config.hotspot_amplitude,
        bounds=config.grid_bounds,
        days=config.days,
    )

    lags = np.array([config.response_lag[j % len(config.response_lag)] for j in range(k)])
    n = config.responses_per_day
    records: list[SurveyRecord] = []
    for day in range(config.days):
        xs = rng.uniform(x0, x1, n)
        ys = rng.uniform(y0, y1, n)
        u = 2.0 * (xs - x0) / (x1 - x0) - 1.0
        w_local = weights[None, :] * (1.0 + tilt * u[:, None] * signs[None, :])
        w_local /= w_local.sum(axis=1, keepdims=True)
        cum = np.cumsum(w_local, axis=1)
        prof = np.minimum((rng.uniform(size=n)[:, None] > cum).sum(axis=1), k - 1)
        # each responder reacts to the intensity of their profile's lag day
        lam = np.empty(n)
        for lag in np.unique(lags[prof]):
            sel = lags[prof] == lag
            lam[sel] = field(xs[sel], ys[sel], max(0, day - int(lag)))

        ages = np.clip(rng.normal(age_centers[prof], 3.0), 0.0, 120.0)
        gender = rng.uniform(size=n) < gender_rate[prof]
        isolation = rng.uniform(size=n) < isolation_rate[prof]
        smoker = rng.uniform(size=n) < smoker_rate[prof]
        chronic = rng.uniform(size=n) < chronic_rate[prof]
        fever = rng.uniform(size=n) < np.clip(fever_prop[prof] * lam, 0.0, 1.0)
        p_sympt = np.clip(props[prof] * lam[:, None], 0.0, 1.0)
        symptoms = rng.uniform(size=(n, N_SYMPTOMS)) < p_sympt

        for i in range(n):
            records.append(
                SurveyRecord(
                    date=day,
                    x=float(xs[i]),
                    y=float(ys[i]),
                    age=float(ages[i]),
                    gender=int(gender[i]),
                    isolation=int(isolation[i]),
                    smoker=int(smoker[i]),
                    chronic=int(chronic[i]),
                    fever=int(fever[i]),
                    symptoms=tuple(int(s) for s in symptoms[i]),
                )
            )
    return records, field


def analytic_mean_sra(config: SyntheticConfig) -> float:
    """Closed-form expected severity for a hotspot-free stream (oracle)."""
    weights = np.array([w for w, _ in config.profile_mix])
    props = np.stack([np.asarray(p, dtype=np.float64) for _, p in config.profile_mix])
    return float(np.dot(weights, props.mean(axis=1)))
