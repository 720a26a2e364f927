"""Pairwise clustering scores against generator ground truth."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from .sessions import DeviceRecord, ScanInstance


@dataclass(frozen=True)
class PairScores:
    true_positive: int
    false_positive: int
    false_negative: int

    @property
    def precision(self) -> float:
        denom = self.true_positive + self.false_positive
        return self.true_positive / denom if denom else 1.0

    @property
    def recall(self) -> float:
        denom = self.true_positive + self.false_negative
        return self.true_positive / denom if denom else 1.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def instance_labels(instances: Sequence[ScanInstance], probe_labels: Sequence[str]) -> list[str]:
    """True device of each instance, by majority vote of its probes."""
    labels = []
    for inst in instances:
        votes = Counter(probe_labels[i] for i in inst.probe_indices)
        labels.append(votes.most_common(1)[0][0])
    return labels


def pair_scores(true: Sequence[str], predicted: Sequence[str],
                involve: Callable[[str], bool] = lambda _: True) -> PairScores:
    """Count instance pairs that agree or disagree between two labelings.

    Only pairs where at least one member's true label satisfies ``involve``
    are counted, which scores one device class without ignoring wrong merges
    into it from elsewhere.
    """
    if len(true) != len(predicted):
        raise ValueError("labelings differ in length")
    # pairs are counted through contingency cells to stay O(n)
    cell = Counter(zip(true, predicted))
    by_true = Counter(true)
    by_pred = Counter(predicted)
    in_group = [involve(t) for t in true]

    def c2(k):
        return k * (k - 1) // 2

    tp = sum(c2(k) for (t, _), k in cell.items() if involve(t))
    same_true = sum(c2(k) for t, k in by_true.items() if involve(t))
    # predicted-same pairs touching the group: all pairs in a cluster minus pairs fully outside
    pred_outside = Counter(p for p, g in zip(predicted, in_group) if not g)
    same_pred = sum(c2(k) - c2(pred_outside.get(p, 0)) for p, k in by_pred.items())
    return PairScores(tp, same_pred - tp, same_true - tp)


def score_devices(instances: Sequence[ScanInstance], devices: Sequence[DeviceRecord],
                  probe_labels: Sequence[str],
                  involve: Callable[[str], bool] = lambda _: True) -> PairScores:
    predicted_of = {}
    for d in devices:
        for inst in d.instances:
            predicted_of[inst.instance_id] = d.device_id
    true = instance_labels(instances, probe_labels)
    predicted = [predicted_of[i.instance_id] for i in instances]
    return pair_scores(true, predicted, involve)
