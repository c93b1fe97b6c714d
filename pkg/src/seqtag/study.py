"""Paired randomized search: sampling, comparison statistics, unit regression, CSV export.

A *group* is one randomly sampled configuration evaluated once per option of
the varied knob; everything else (including the task) is shared within the
group. The comparison statistics only ever look at complete groups.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .config import (
    BATCH_SIZES, CHAR_REPS, CLASSIFIERS, LAYER_COUNTS, UNIT_CHOICES, ConfigError, NetworkConfig,
    canonical_json,
)
from .nn.dropout import DROPOUT_KINDS, DROPOUT_RATES
from .optim import OPTIMIZERS, POLICY_KINDS, POLICY_THRESHOLDS

log = logging.getLogger(__name__)

ALPHA = 0.01
SEED_STRIDE = 64
DEPTH_UNITS = tuple(u for u in range(60, 301) if u % 6 == 0)

DEFAULT_CANDIDATES = {
    "embedding_path": (None,),
    "char_rep": CHAR_REPS,
    "classifier": CLASSIFIERS,
    "dropout.kind": DROPOUT_KINDS,
    "dropout.p_output": DROPOUT_RATES,
    "dropout.p_recurrent": DROPOUT_RATES,
    "layers": LAYER_COUNTS,
    "units": UNIT_CHOICES,
    "optimizer": OPTIMIZERS,
    "gradient_policy.kind": POLICY_KINDS,
    "gradient_policy.tau": POLICY_THRESHOLDS,
    "batch_size": BATCH_SIZES,
    "tag_scheme": ("BIO", "IOB", "IOBES"),
}


def _value_label(value) -> str:
    return value if isinstance(value, str) else json.dumps(value)


@dataclass
class HyperparameterSpace:
    """Candidate values per knob plus fixed overrides applied to every config.

    ``units`` is drawn independently per layer. Varying ``layers`` switches
    to the depth design: one total ``u`` from ``depth_units`` split evenly
    over the layers.
    """

    candidates: dict = field(default_factory=lambda: dict(DEFAULT_CANDIDATES))
    fixed: dict = field(default_factory=dict)
    depth_units: tuple = DEPTH_UNITS

    def __post_init__(self):
        cands = dict(DEFAULT_CANDIDATES)
        for knob, values in self.candidates.items():
            if knob not in DEFAULT_CANDIDATES:
                raise ConfigError(knob, values, sorted(DEFAULT_CANDIDATES), "unknown knob")
            values = tuple(values)
            if not values:
                raise ConfigError(knob, values, reason="needs at least one candidate")
            cands[knob] = values
        self.candidates = cands
        known = {f.name for f in dataclasses.fields(NetworkConfig)}
        for key in self.fixed:
            if key.split(".")[0] not in known:
                raise ConfigError(key, self.fixed[key], reason="unknown config field")
        if any(u % 6 for u in self.depth_units):
            raise ConfigError("depth_units", self.depth_units, reason="must be divisible by 2 and 3")

    @classmethod
    def from_dict(cls, d: Mapping) -> "HyperparameterSpace":
        unknown = set(d) - {"candidates", "fixed", "depth_units"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], None, reason="unknown space section")
        return cls(dict(d.get("candidates", {})), dict(d.get("fixed", {})),
                   tuple(d.get("depth_units", DEPTH_UNITS)))

    @classmethod
    def load(cls, path) -> "HyperparameterSpace":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def options(self, vary: str) -> tuple:
        if vary not in self.candidates:
            raise ConfigError("vary", vary, sorted(self.candidates), "unknown knob")
        opts = self.candidates[vary]
        if len(opts) < 2:
            raise ConfigError("vary", vary, reason="the varied knob needs at least 2 candidates")
        return opts


def _draw(rng: np.random.Generator, values):
    return values[int(rng.integers(len(values)))]


def _draw_point(space: HyperparameterSpace, rng: np.random.Generator) -> dict:
    """One independent uniform draw per knob (always all knobs, for stable streams)."""
    point = {k: _draw(rng, v) for k, v in space.candidates.items() if k != "units"}
    while True:
        units = [_draw(rng, space.candidates["units"]) for _ in range(max(LAYER_COUNTS))]
        if all(b <= a for a, b in zip(units, units[1:])):
            break
    point["units"] = units
    point["depth_u"] = _draw(rng, space.depth_units)
    return point


def _to_config(space: HyperparameterSpace, point: dict, seed: int) -> NetworkConfig:
    layers = point["layers"]
    d = NetworkConfig().to_dict()
    for key, value in point.items():
        if key in ("units", "depth_u"):
            continue
        head, _, tail = key.partition(".")
        if tail:
            d[head][tail] = value
        else:
            d[head] = value
    d["units_per_layer"] = list(point["units"][:layers])
    for key, value in space.fixed.items():
        head, _, tail = key.partition(".")
        if tail:
            d[head][tail] = value
        else:
            d[head] = value
    d["seed"] = seed
    return NetworkConfig.from_dict(d)


def sample_config(space: HyperparameterSpace, rng: np.random.Generator, seed: int = 0) -> NetworkConfig:
    return _to_config(space, _draw_point(space, rng), seed)


def run_seed(base_seed: int, group_id: int, option_index: int) -> int:
    return base_seed + group_id * SEED_STRIDE + option_index


def paired_group(space: HyperparameterSpace, vary: str, group_id: int, base_seed: int = 0
                 ) -> list[tuple[str, NetworkConfig]]:
    """``(option label, config)`` for every option of ``vary`` in one group.

    The group's draw depends only on ``(base_seed, group_id)`` so resumed
    sweeps regenerate identical groups.
    """
    opts = space.options(vary)
    point = _draw_point(space, np.random.default_rng([base_seed, group_id]))
    out = []
    for o, value in enumerate(opts):
        p = dict(point)
        if vary == "layers":
            if point["depth_u"] % value:
                raise ConfigError("layers", value, reason=f"u={point['depth_u']} not divisible")
            p["layers"] = value
            p["units"] = [point["depth_u"] // value] * value
        elif vary == "units":
            p["units"] = [value] * max(LAYER_COUNTS)
        else:
            p[vary] = value
        out.append((_value_label(value), _to_config(space, p, run_seed(base_seed, group_id, o))))
    return out


def differing_fields(a: NetworkConfig, b: NetworkConfig) -> set[str]:
    """Dotted names of config fields that differ, ignoring the seed."""
    da, db = a.to_dict(), b.to_dict()
    out = set()
    for key in da:
        if key == "seed":
            continue
        if isinstance(da[key], dict) and isinstance(db[key], dict):
            out |= {f"{key}.{k}" for k in da[key] if da[key][k] != db[key][k]}
        elif da[key] != db[key]:
            out.add(key)
    return out


def check_paired(configs: Sequence[NetworkConfig], vary: str) -> None:
    allowed = {vary}
    if vary == "units":
        allowed = {"units_per_layer"}
    elif vary == "layers":
        allowed = {"layers", "units_per_layer"}
    for c in configs[1:]:
        extra = differing_fields(configs[0], c) - allowed
        if extra:
            raise AssertionError(f"paired configs differ beyond {vary}: {sorted(extra)}")


# ---------------------------------------------------------------------- records

RESULT_COLUMNS = ("group_id", "option", "seed", "task", "score", "dev_score", "epochs",
                  "diverged", "config")


@dataclass(frozen=True)
class StudyRecord:
    group_id: int
    option: str
    seed: int
    task: str
    score: float
    dev_score: float
    epochs: int
    diverged: bool
    config: str  # canonical JSON

    def __post_init__(self):
        for name in ("score", "dev_score"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def row(self) -> list[str]:
        return [str(self.group_id), self.option, str(self.seed), self.task, repr(float(self.score)),
                repr(float(self.dev_score)), str(self.epochs), "true" if self.diverged else "false",
                self.config]

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> "StudyRecord":
        return cls(int(row["group_id"]), row["option"], int(row["seed"]), row["task"],
                   float(row["score"]), float(row["dev_score"]), int(row["epochs"]),
                   row["diverged"] == "true", row["config"])

    @property
    def network_config(self) -> NetworkConfig:
        return NetworkConfig.from_json(self.config)


def write_results(path, records: Iterable[StudyRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(RESULT_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_results(path) -> list[StudyRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            return []
        if tuple(reader.fieldnames) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [StudyRecord.from_row(row) for row in reader]


class ResultsAppender:
    """Serialized row appends; a row is written and flushed under one lock."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        if not self.path.exists() or self.path.stat().st_size == 0:
            write_results(self.path, [])

    def append(self, records: Iterable[StudyRecord]) -> None:
        rows = [r.row() for r in records]
        with self._lock, open(self.path, "a", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            for row in rows:
                w.writerow(row)
            f.flush()


# ---------------------------------------------------------------------- statistics

def complete_groups(records: Sequence[StudyRecord], options: Sequence[str] | None = None
                    ) -> tuple[list[str], dict]:
    """``(options, {(task, group_id): {option: record}})`` for complete groups only."""
    if options is None:
        options = sorted({r.option for r in records})
    groups: dict = defaultdict(dict)
    for r in records:
        key = (r.task, r.group_id)
        if r.option in groups[key]:
            raise ValueError(f"duplicate option {r.option!r} in group {key}")
        groups[key][r.option] = r
    complete = {}
    for key, g in groups.items():
        if set(g) >= set(options):
            complete[key] = g
        else:
            log.warning("group %s is incomplete (%d of %d options), excluded", key, len(g), len(options))
    return list(options), complete


def win_fractions(scores: Mapping, options: Sequence[str]) -> dict[str, float]:
    """``scores`` maps group -> {option: score}; ties for first place split the win."""
    wins = dict.fromkeys(options, 0.0)
    if not scores:
        return wins
    for g in scores.values():
        top = max(g[o] for o in options)
        winners = [o for o in options if g[o] == top]
        for o in winners:
            wins[o] += 1.0 / len(winners)
    n = len(scores)
    return {o: w / n for o, w in wins.items()}


def median_delta(scores: Mapping, best: str, options: Sequence[str]) -> dict[str, float]:
    """Median over groups of ``score_o - score_best``, in the score's own units."""
    return {o: float(np.median([g[o] - g[best] for g in scores.values()])) for o in options}


def binomial_sign_test(wins: int, n: int) -> float:
    """Exact two-sided binomial test against p = 1/2.

    Sums the probabilities of all outcomes no more likely than the observed
    one. Exact integer arithmetic, so large ``n`` loses no precision.
    """
    if not 0 <= wins <= n:
        raise ValueError(f"need 0 <= wins <= n, got wins={wins}, n={n}")
    if n == 0:
        return 1.0
    observed = math.comb(n, wins)
    tail = sum(c for c in (math.comb(n, i) for i in range(n + 1)) if c <= observed)
    return float(min(Fraction(tail, 2 ** n), Fraction(1)))


def head_to_head(scores: Mapping, a: str, b: str) -> tuple[int, int]:
    """Groups where ``a`` beats ``b`` and the number of non-tied groups."""
    wins = sum(g[a] > g[b] for g in scores.values())
    n = sum(g[a] != g[b] for g in scores.values())
    return int(wins), int(n)


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    if x in (0.0, 1.0):
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail P(F > f) of the F(d1, d2) distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


@dataclass(frozen=True)
class BrownForsythe:
    statistic: float
    p: float
    df: tuple


def brown_forsythe(*samples: Sequence[float]) -> BrownForsythe:
    """Variance-equality test: one-way ANOVA on absolute deviations from group medians."""
    if len(samples) < 2 or any(len(s) < 2 for s in samples):
        raise ValueError("need at least 2 groups with at least 2 values each")
    z = [np.abs(np.asarray(s, dtype=np.float64) - np.median(s)) for s in samples]
    k = len(z)
    n = sum(len(g) for g in z)
    grand = np.concatenate(z).mean()
    between = sum(len(g) * (g.mean() - grand) ** 2 for g in z)
    within = sum(float(np.sum((g - g.mean()) ** 2)) for g in z)
    df = (k - 1, n - k)
    if between == 0:
        return BrownForsythe(0.0, 1.0, df)
    if within == 0:
        return BrownForsythe(math.inf, 0.0, df)
    stat = float((n - k) / (k - 1) * between / within)
    return BrownForsythe(stat, f_sf(stat, *df), df)


@dataclass
class OptionRow:
    option: str
    win_fraction: float
    delta: float | None  # median difference to the best option, None for the best
    sigma: float
    median_score: float
    binom_p: float | None
    bf_p: float | None
    marked: bool
    sigma_marked: bool
    median_epochs: float


@dataclass
class ComparisonTable:
    task: str
    vary: str
    n_groups: int
    best: str
    rows: list

    def row(self, option: str) -> OptionRow:
        return next(r for r in self.rows if r.option == option)

    def format(self) -> str:
        head = f"{self.task} (vary {self.vary}, {self.n_groups} groups, best {self.best})"
        lines = [head, f"{'option':<16}{'win':>9}{'delta':>9}{'sigma':>9}{'p_bin':>11}{'p_bf':>11}{'epochs':>8}"]
        for r in self.rows:
            win = f"{100 * r.win_fraction:.1f}%" + ("†" if r.marked else "")
            delta = "" if r.delta is None else f"{100 * r.delta:+.2f}"
            sigma = f"{100 * r.sigma:.2f}" + ("†" if r.sigma_marked else "")
            bp = "" if r.binom_p is None else f"{r.binom_p:.3g}"
            fp = "" if r.bf_p is None else f"{r.bf_p:.3g}"
            lines.append(f"{r.option:<16}{win:>9}{delta:>9}{sigma:>9}{bp:>11}{fp:>11}{r.median_epochs:>8g}")
        return "\n".join(lines)


def _markers(best: str, pvalues: Mapping[str, float | None]) -> dict[str, bool]:
    # once some option is significantly different from the best, the best and
    # every option not distinguishable from it form the marked top set
    others = {o: p for o, p in pvalues.items() if o != best}
    if not any(p < ALPHA for p in others.values()):
        return dict.fromkeys(pvalues, False)
    return {o: o == best or others[o] >= ALPHA for o in pvalues}


def compare(records: Sequence[StudyRecord], vary: str, options: Sequence[str] | None = None
            ) -> list[ComparisonTable]:
    """One comparison table per task over the complete groups."""
    options, groups = complete_groups(records, options)
    if len(options) < 2:
        raise ValueError(f"need at least 2 options to compare, found {list(options)}")
    by_task = defaultdict(dict)
    for (task, gid), g in groups.items():
        by_task[task][gid] = g
    tables = []
    for task in sorted(by_task):
        recs = by_task[task]
        scores = {gid: {o: g[o].score for o in options} for gid, g in recs.items()}
        wins = win_fractions(scores, options)
        medians = {o: float(np.median([s[o] for s in scores.values()])) for o in options}
        best = max(options, key=lambda o: (wins[o], medians[o]))
        deltas = median_delta(scores, best, options)
        binom, bf = {best: None}, {best: None}
        for o in options:
            if o == best:
                continue
            w, n = head_to_head(scores, best, o)
            binom[o] = binomial_sign_test(w, n)
            a = [s[best] for s in scores.values()]
            b = [s[o] for s in scores.values()]
            bf[o] = brown_forsythe(a, b).p if len(a) >= 2 else 1.0
        marks, smarks = _markers(best, binom), _markers(best, bf)
        rows = [OptionRow(
            option=o, win_fraction=wins[o], delta=None if o == best else deltas[o],
            sigma=float(np.std([s[o] for s in scores.values()])), median_score=medians[o],
            binom_p=binom[o], bf_p=bf[o], marked=marks[o], sigma_marked=smarks[o],
            median_epochs=float(np.median([g[o].epochs for g in recs.values()])),
        ) for o in options]
        tables.append(ComparisonTable(task, vary, len(scores), best, rows))
    return tables


COMPARISON_COLUMNS = ("task", "option", "n_groups", "win_pct", "delta_pp", "sigma_pp", "binom_p",
                      "bf_p", "win_marked", "sigma_marked", "median_score", "median_epochs")


def write_comparison(path, tables: Sequence[ComparisonTable]) -> None:
    def opt(v):
        return "" if v is None else repr(v)

    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(COMPARISON_COLUMNS)
        for t in tables:
            for r in t.rows:
                w.writerow([t.task, r.option, t.n_groups, repr(100 * r.win_fraction),
                            opt(None if r.delta is None else 100 * r.delta), repr(100 * r.sigma),
                            opt(r.binom_p), opt(r.bf_p), "†" if r.marked else "",
                            "†" if r.sigma_marked else "", repr(r.median_score),
                            repr(r.median_epochs)])


def write_violin_data(path, records: Sequence[StudyRecord], options: Sequence[str] | None = None) -> None:
    """Long format ``task, option, group_id, score`` over complete groups."""
    options, groups = complete_groups(records, options)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(("task", "option", "group_id", "score"))
        for (task, gid) in sorted(groups):
            for o in options:
                w.writerow([task, o, gid, repr(groups[(task, gid)][o].score)])


# ---------------------------------------------------------------------- unit regression

@dataclass(frozen=True)
class PolyFit:
    a: float
    b: float
    c: float
    x_opt: float | None
    in_range: bool
    gamma25: float
    residual: float
    x_min: float
    x_max: float
    n: int

    def __call__(self, x):
        return self.a * np.asarray(x) ** 2 + self.b * np.asarray(x) + self.c

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def poly_fit(x: Sequence[float], y: Sequence[float]) -> PolyFit:
    """Least-squares parabola through ``(x, y)`` via the 3x3 normal equations.

    ``x`` is centred and scaled before forming the equations, which keeps
    them well conditioned for unit counts in the hundreds; the coefficients
    are mapped back exactly. ``x_opt`` is only reported for a concave fit
    whose vertex lies within the observed x range.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    if len(np.unique(x)) < 3:
        raise np.linalg.LinAlgError("need at least 3 distinct x values for a quadratic fit")
    m = x.mean()
    s = np.abs(x - m).max()
    t = (x - m) / s
    V = np.stack([t * t, t, np.ones_like(t)], axis=1)
    A = V.T @ V
    if np.linalg.matrix_rank(A) < 3:
        raise np.linalg.LinAlgError("normal equations are rank deficient")
    alpha, beta, gamma = np.linalg.solve(A, V.T @ y)
    # alpha t^2 + beta t + gamma with t = (x - m) / s
    a = alpha / s ** 2
    b = beta / s - 2 * alpha * m / s ** 2
    c = alpha * m ** 2 / s ** 2 - beta * m / s + gamma
    resid = float(np.sum((V @ np.array([alpha, beta, gamma]) - y) ** 2))
    x_opt, in_range = None, False
    if a < 0:
        x_opt = float(-b / (2 * a))
        in_range = bool(x.min() <= x_opt <= x.max())
    return PolyFit(float(a), float(b), float(c), x_opt, in_range, float(625 * a), resid,
                   float(x.min()), float(x.max()), int(len(x)))


def units_points(records: Sequence[StudyRecord], layers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(average units per LSTM, test score) for non-diverged records of the given depth."""
    xs, ys = [], []
    for r in records:
        if r.diverged:
            continue
        cfg = json.loads(r.config)
        if layers is not None and cfg["layers"] != layers:
            continue
        xs.append(float(np.mean(cfg["units_per_layer"])))
        ys.append(r.score)
    return np.array(xs), np.array(ys)


def binned_medians(x: np.ndarray, y: np.ndarray) -> list[tuple[float, float, int]]:
    """Median score per distinct x value: ``(x, median, count)``."""
    return [(float(v), float(np.median(y[x == v])), int(np.sum(x == v))) for v in np.unique(x)]
