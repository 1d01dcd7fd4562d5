"""Time-to-success statistics: summaries and one-sided two-sample t-tests."""
from __future__ import annotations

import csv
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .errors import UsageError

log = logging.getLogger(__name__)

SIGNIFICANCE = 0.05
AGENT_ORDER = ("a2c", "curious", "power")
ENV_ORDER = ("multiroom-n3-s4", "doorkey-8x8", "keycorridor-s3r1")


@dataclass
class SampleSet:
    label: str
    values: list[float]

    def __post_init__(self):
        self.values = [float(v) for v in self.values]
        if not self.values:
            raise UsageError(f"sample {self.label!r} is empty")


@dataclass
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    direction: str = ""

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE


def mean_sd(sample: SampleSet | Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and n-1 standard deviation."""
    values = np.asarray(sample.values if isinstance(sample, SampleSet) else sample, dtype=np.float64)
    if values.size < 2:
        raise UsageError("standard deviation needs at least two values")
    return float(values.mean()), float(values.std(ddof=1))


def t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) of Student's t via the regularized incomplete beta."""
    if df <= 0:
        raise UsageError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * float(betainc(0.5 * df, 0.5, df / (df + t * t)))
    return tail if t >= 0 else 1.0 - tail


def t_cdf(t: float, df: float) -> float:
    return t_sf(-t, df)


def welch_df(sd1: float, n1: int, sd2: float, n2: int) -> float:
    a, b = sd1 * sd1 / n1, sd2 * sd2 / n2
    return (a + b) ** 2 / (a * a / (n1 - 1) + b * b / (n2 - 1))


def one_sided_t_from_summary(m1: float, sd1: float, n1: int, m2: float, sd2: float, n2: int,
                             welch: bool = False, direction: str = "") -> TTestResult:
    """Test H1: mean 1 > mean 2, i.e. t = (m1 - m2) / sqrt(sd1^2/n1 + sd2^2/n2).

    Degrees of freedom are n1 + n2 - 2 unless ``welch`` is set.  Zero spread
    with equal means gives t = 0 and p = 0.5.
    """
    if n1 < 2 or n2 < 2:
        raise UsageError("each sample needs at least two values")
    if sd1 < 0 or sd2 < 0:
        raise UsageError("standard deviations must be non-negative")
    se = math.sqrt(sd1 * sd1 / n1 + sd2 * sd2 / n2)
    if se == 0.0:
        if m1 != m2:
            raise UsageError("both standard deviations are zero but the means differ")
        return TTestResult(0.0, float(n1 + n2 - 2), 0.5, direction)
    t = (m1 - m2) / se
    df = welch_df(sd1, n1, sd2, n2) if welch else float(n1 + n2 - 2)
    return TTestResult(t, df, t_sf(t, df), direction)


def one_sided_t(sample_a: SampleSet, sample_b: SampleSet, welch: bool = False) -> TTestResult:
    """Test whether ``sample_a`` is faster (smaller time-to-success) than ``sample_b``.

    A positive t supports the hypothesis.
    """
    ma, sa = mean_sd(sample_a)
    mb, sb = mean_sd(sample_b)
    return one_sided_t_from_summary(mb, sb, len(sample_b.values), ma, sa, len(sample_a.values),
                                    welch=welch, direction=f"{sample_a.label} faster than {sample_b.label}")


# --------------------------------------------------------------------------
# Tables


@dataclass
class Report:
    summary_rows: list[dict] = field(default_factory=list)
    ttests: dict[str, list[dict]] = field(default_factory=dict)
    dropped: list[int] = field(default_factory=list)

    def to_text(self) -> str:
        lines = ["Time-to-success summary (frames)"]
        starred = bool(self.dropped)
        head = f"{'env':<18}{'agent':<9}{'n':>3}{'M':>12}{'SD':>12}"
        if starred:
            head += f"{'n*':>4}{'M*':>12}{'SD*':>12}"
        lines.append(head)
        for row in self.summary_rows:
            line = f"{row['env']:<18}{row['agent']:<9}{row['n']:>3}{row['mean']:>12.4g}{row['sd']:>12.4g}"
            if starred:
                line += f"{row['n_star']:>4}{_fmt(row['mean_star']):>12}{_fmt(row['sd_star']):>12}"
            lines.append(line)
        for env, rows in self.ttests.items():
            lines.append("")
            lines.append(f"One-sided t-tests, {env} (H1: row agent learns faster than column agent)")
            for row in rows:
                line = (f"  {row['row_agent']:<8} vs {row['col_agent']:<8} t={row['t']:8.3f}  "
                        f"df={row['df']:6.2f}  p={row['p']:.3g}{'  *sig*' if row['significant'] else ''}")
                if starred:
                    line += f"  | t*={_fmt(row['t_star'], '8.3f')}  p*={_fmt(row['p_star'], '.3g')}"
                lines.append(line)
        if starred:
            lines.append("")
            lines.append(f"* = reanalysis without run indices {self.dropped}")
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        _write_rows(os.path.join(out_dir, "table_summary.csv"), self.summary_rows)
        for env, rows in self.ttests.items():
            _write_rows(os.path.join(out_dir, f"ttests_{env}.csv"), rows)
        with open(os.path.join(out_dir, "report.txt"), "w") as fh:
            fh.write(self.to_text())


def _fmt(x, spec: str = ".4g") -> str:
    return "-" if x is None or (isinstance(x, float) and math.isnan(x)) else format(x, spec)


def _write_rows(path: str, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})


def _ordered(keys, order):
    return sorted(keys, key=lambda k: (order.index(k) if k in order else len(order), k))


def analyze(summaries: Sequence, drop_runs: Sequence[int] | None = None, welch: bool = False) -> Report:
    """Summary table and all pairwise one-sided tests per environment.

    Runs inside an (env, agent) cell are indexed 0, 1, ... by ascending seed;
    ``drop_runs`` names indices to leave out of the starred reanalysis.
    """
    drop = sorted(set(drop_runs or []))
    cells: dict[tuple[str, str], list] = defaultdict(list)
    for s in summaries:
        cells[(s.env, s.agent)].append(s)

    samples: dict[tuple[str, str], SampleSet] = {}
    starred: dict[tuple[str, str], SampleSet | None] = {}
    report = Report(dropped=drop)
    for env in _ordered({e for e, _ in cells}, ENV_ORDER):
        for agent in _ordered({a for e, a in cells if e == env}, AGENT_ORDER):
            runs = sorted(cells[(env, agent)], key=lambda s: s.seed)
            if len(runs) < 2:
                log.warning("skipping %s/%s: fewer than two runs", env, agent)
                continue
            values = [float(r.time_to_success) for r in runs]
            samples[(env, agent)] = SampleSet(f"{agent}", values)
            m, sd = mean_sd(values)
            row = {"env": env, "agent": agent, "n": len(values), "mean": m, "sd": sd}
            if drop:
                kept = [v for i, v in enumerate(values) if i not in drop]
                starred[(env, agent)] = SampleSet(agent, kept) if len(kept) >= 2 else None
                ms, sds = mean_sd(kept) if len(kept) >= 2 else (None, None)
                row.update({"n_star": len(kept), "mean_star": ms, "sd_star": sds})
            report.summary_rows.append(row)

    for env in _ordered({e for e, _ in samples}, ENV_ORDER):
        agents = _ordered([a for e, a in samples if e == env], AGENT_ORDER)
        rows = []
        for row_agent in agents:
            for col_agent in agents:
                if row_agent == col_agent:
                    continue
                res = one_sided_t(samples[(env, row_agent)], samples[(env, col_agent)], welch)
                row = {"row_agent": row_agent, "col_agent": col_agent, "t": res.t_statistic,
                       "df": res.degrees_of_freedom, "p": res.p_value, "significant": res.significant}
                if drop:
                    a, b = starred.get((env, row_agent)), starred.get((env, col_agent))
                    res_star = one_sided_t(a, b, welch) if a is not None and b is not None else None
                    row.update({
                        "t_star": res_star.t_statistic if res_star else None,
                        "p_star": res_star.p_value if res_star else None,
                        "significant_star": res_star.significant if res_star else None,
                    })
                rows.append(row)
        if rows:
            report.ttests[env] = rows
    return report
