"""Majority-vote fusion of several classifiers' label predictions."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import ConfigError, InputError


@dataclass(frozen=True)
class FusionEnsemble:
    """Member ids in priority order (index 0 = highest priority).

    The priority only matters for breaking vote ties.
    """

    members: tuple
    accuracies: tuple | None = None

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) < 2:
            raise ConfigError("a fusion ensemble needs at least two members")
        if len(set(members)) != len(members):
            raise ConfigError("duplicate ensemble members")
        object.__setattr__(self, "members", members)
        if self.accuracies is not None:
            accs = tuple(float(a) for a in self.accuracies)
            if len(accs) != len(members):
                raise ConfigError("one accuracy per member required")
            object.__setattr__(self, "accuracies", accs)

    @classmethod
    def by_accuracy(cls, accuracies: dict) -> "FusionEnsemble":
        """Order members by descending validation accuracy; equal scores keep insertion order."""
        items = sorted(accuracies.items(), key=lambda kv: -kv[1])
        return cls(tuple(k for k, _ in items), tuple(v for _, v in items))


def fuse(predictions, ensemble: FusionEnsemble):
    """Most-voted label; ties go to the tied label voted by the highest-priority member."""
    predictions = list(predictions)
    if not predictions:
        raise InputError("no predictions to fuse")
    if len(predictions) != len(ensemble.members):
        raise InputError(f"{len(predictions)} predictions for {len(ensemble.members)} members")
    counts = Counter(predictions)
    top = max(counts.values())
    tied = {label for label, c in counts.items() if c == top}
    for label in predictions:
        if label in tied:
            return label
    raise AssertionError("unreachable")


def fuse_many(prediction_lists: dict, ensemble: FusionEnsemble) -> list:
    """Fuse aligned per-member prediction lists item by item."""
    columns = [prediction_lists[m] for m in ensemble.members]
    lengths = {len(c) for c in columns}
    if len(lengths) != 1:
        raise InputError("member prediction lists differ in length")
    return [fuse(row, ensemble) for row in zip(*columns)]
