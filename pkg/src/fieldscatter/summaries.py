"""Fixed-length summary vectors with labelled entries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SummaryVector:
    values: np.ndarray
    schema: tuple[str, ...]
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "schema", tuple(self.schema))
        if values.size != len(self.schema):
            raise ValueError(f"{values.size} values for {len(self.schema)} labels")

    def __len__(self) -> int:
        return self.values.size


def combine(a: SummaryVector, b: SummaryVector) -> SummaryVector:
    """Concatenate two summaries of the same field (labels of ``a`` first)."""
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    for key in ("seed", "source"):
        if key in a.provenance and key in b.provenance and a.provenance[key] != b.provenance[key]:
            raise ValueError(
                f"provenance mismatch on {key!r}: {a.provenance[key]!r} vs {b.provenance[key]!r}"
            )
    dup = set(a.schema) & set(b.schema)
    if dup:
        raise ValueError(f"duplicate labels in combined schema: {sorted(dup)}")
    return SummaryVector(
        np.concatenate([a.values, b.values]),
        a.schema + b.schema,
        {**b.provenance, **a.provenance},
    )
