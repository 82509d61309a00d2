"""Token-level scoring of predicted label sequences against gold.

The headline metric is micro-averaged F1 of the KEEP class over all tokens
in the corpus; both classes' statistics can be read off the shared
confusion counts. Precision, recall, and F1 fall back to 0 when their
denominators vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

from .compression import DEL, KEEP
from .errors import ShapeError


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    predicted_deletion_rate: float
    sentence_count: int
    token_count: int
    tp: int
    fp: int
    fn: int
    tn: int

    MACHINE_HEADER = ("precision\trecall\tf1\taccuracy\tpred_deletion_rate\t"
                      "sentences\ttokens\ttp\tfp\tfn\ttn")

    def machine_line(self) -> str:
        return "\t".join([
            repr(self.precision), repr(self.recall), repr(self.f1),
            repr(self.accuracy), repr(self.predicted_deletion_rate),
            str(self.sentence_count), str(self.token_count),
            str(self.tp), str(self.fp), str(self.fn), str(self.tn),
        ])

    def text(self, positive_class: str = KEEP) -> str:
        return "\n".join([
            f"sentences: {self.sentence_count}   tokens: {self.token_count}",
            f"positive class {positive_class}: precision={self.precision:.4f} "
            f"recall={self.recall:.4f} f1={self.f1:.4f}",
            f"token accuracy: {self.accuracy:.4f}",
            f"predicted deletion rate: {self.predicted_deletion_rate:.4f}",
            f"confusion: tp={self.tp} fp={self.fp} fn={self.fn} tn={self.tn}",
        ])


def _check_aligned(gold, pred):
    if len(gold) != len(pred):
        raise ShapeError(
            f"corpus sizes differ: {len(gold)} gold vs {len(pred)} predicted sentences"
        )
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise ShapeError(
                f"sentence {i}: {len(g)} gold labels vs {len(p)} predicted"
            )


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def token_f1(gold, pred, positive_class: str = KEEP) -> EvalReport:
    """Micro-averaged precision/recall/F1 over all tokens in the corpus.

    ``gold`` and ``pred`` are parallel lists of per-sentence label lists.
    """
    _check_aligned(gold, pred)
    tp = fp = fn = tn = 0
    deleted = 0
    total = 0
    for g_labels, p_labels in zip(gold, pred):
        for g, p in zip(g_labels, p_labels):
            total += 1
            if p == DEL:
                deleted += 1
            if g == positive_class:
                if p == positive_class:
                    tp += 1
                else:
                    fn += 1
            elif p == positive_class:
                fp += 1
            else:
                tn += 1
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    accuracy = _safe_div(tp + tn, total)
    return EvalReport(
        precision=precision, recall=recall, f1=f1, accuracy=accuracy,
        predicted_deletion_rate=_safe_div(deleted, total),
        sentence_count=len(gold), token_count=total,
        tp=tp, fp=fp, fn=fn, tn=tn,
    )


def summary_metrics(gold, pred) -> tuple[float, float, float]:
    """(token accuracy, predicted deletion rate, gold deletion rate)."""
    _check_aligned(gold, pred)
    total = matching = pred_del = gold_del = 0
    for g_labels, p_labels in zip(gold, pred):
        for g, p in zip(g_labels, p_labels):
            total += 1
            matching += g == p
            pred_del += p == DEL
            gold_del += g == DEL
    return (
        _safe_div(matching, total),
        _safe_div(pred_del, total),
        _safe_div(gold_del, total),
    )
