"""Ranking metrics used by the CheckThat! check-worthiness task.

All metrics operate on a single ranked list: scores sorted descending with
ties broken by ascending sample id.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping

K_VALUES = (1, 3, 5, 10, 20, 50)
REPORT_COLUMNS = ("MAP", "R-Rank", "R-Pr") + tuple(f"P@{k}" for k in K_VALUES)


class UndefinedMetricError(ValueError):
    """Raised when a metric needs at least one relevant item and there is none."""


@dataclass(frozen=True)
class RankedList:
    ids: tuple[str, ...]
    scores: tuple[float, ...]
    labels: tuple[int, ...]
    n_relevant: int

    def __len__(self):
        return len(self.ids)


def _as_score_map(predictions) -> dict[str, float]:
    if isinstance(predictions, Mapping):
        items = list(predictions.items())
    else:
        items = [(p.sample_id, p.score) for p in predictions]
    out = {}
    for sid, score in items:
        if sid in out:
            raise ValueError(f"duplicate prediction for id {sid!r}")
        score = float(score)
        if math.isnan(score):
            raise ValueError(f"NaN score for id {sid!r}")
        out[sid] = score
    return out


def rank(predictions, gold: Mapping[str, int]) -> RankedList:
    """Order predictions (a ``{id: score}`` mapping or Prediction objects).

    Every predicted id must appear in ``gold``.  Gold ids without a
    prediction still count toward the number of relevant items.
    """
    scores = _as_score_map(predictions)
    for sid in scores:
        if sid not in gold:
            raise KeyError(f"prediction for unknown id {sid!r}")
    order = sorted(scores, key=lambda sid: (-scores[sid], sid))
    return RankedList(
        ids=tuple(order),
        scores=tuple(scores[s] for s in order),
        labels=tuple(int(gold[s]) for s in order),
        n_relevant=sum(1 for v in gold.values() if int(v) == 1),
    )


def _require_relevant(ranked: RankedList, name: str):
    if ranked.n_relevant < 1:
        raise UndefinedMetricError(f"{name} is undefined without relevant items")


def average_precision(ranked: RankedList) -> float:
    _require_relevant(ranked, "average precision")
    hits, total = 0, 0.0
    for i, rel in enumerate(ranked.labels, start=1):
        if rel:
            hits += 1
            total += hits / i
    return total / ranked.n_relevant


def reciprocal_rank(ranked: RankedList) -> float:
    _require_relevant(ranked, "reciprocal rank")
    for i, rel in enumerate(ranked.labels, start=1):
        if rel:
            return 1.0 / i
    return 0.0


def r_precision(ranked: RankedList) -> float:
    _require_relevant(ranked, "R-precision")
    r = ranked.n_relevant
    return sum(ranked.labels[:r]) / r


def precision_at_k(ranked: RankedList, k: int) -> float:
    """Relevant items in the top ``k`` divided by ``k``, even for shorter lists."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(ranked.labels[:k]) / k


@dataclass(frozen=True)
class MetricsReport:
    map: float | None
    reciprocal_rank: float | None
    r_precision: float | None
    p_at_1: float
    p_at_3: float
    p_at_5: float
    p_at_10: float
    p_at_20: float
    p_at_50: float

    @property
    def defined(self) -> bool:
        return self.map is not None

    def values(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))

    def as_dict(self) -> dict:
        return dict(zip(REPORT_COLUMNS, self.values()))

    def tsv_row(self) -> str:
        return "\t".join("undefined" if v is None else f"{v:.3f}" for v in self.values())


def _report(ranked: RankedList) -> MetricsReport:
    pk = [precision_at_k(ranked, k) for k in K_VALUES]
    if ranked.n_relevant == 0:
        return MetricsReport(None, None, None, *pk)
    return MetricsReport(average_precision(ranked), reciprocal_rank(ranked),
                         r_precision(ranked), *pk)


def evaluate(predictions, gold: Mapping[str, int], strict: bool = False,
             topics: Mapping[str, str] | None = None) -> MetricsReport:
    """Compute every metric on one ranked list.

    With no relevant items, MAP / R-Rank / R-Pr are ``None`` (or raise
    :class:`UndefinedMetricError` when ``strict``) while P@k is still reported.

    ``topics`` (id -> topic) switches to per-topic ranking: each field is the
    mean over topics for which it is defined.
    """
    if topics is None:
        report = _report(rank(predictions, gold))
    else:
        scores = _as_score_map(predictions)
        groups: dict[str, list[str]] = {}
        for sid in gold:
            groups.setdefault(topics.get(sid, ""), []).append(sid)
        per = [_report(rank({s: scores[s] for s in ids if s in scores},
                            {s: gold[s] for s in ids}))
               for _, ids in sorted(groups.items())]
        cols = []
        for j in range(len(REPORT_COLUMNS)):
            vals = [r.values()[j] for r in per if r.values()[j] is not None]
            cols.append(sum(vals) / len(vals) if vals else None)
        report = MetricsReport(*cols)
    if strict and not report.defined:
        raise UndefinedMetricError("MAP, R-Rank and R-Pr are undefined: no relevant items")
    return report
