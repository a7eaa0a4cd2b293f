"""Stage-transition matrices and task-success classification.

Transition counts come from turn-log stage tags, consecutive pairs within
one conversation only. Normalization divides by total turns, not by
transitions, so the cells of a single conversation sum to
(turns - 1) / turns; the report footnote states the divisor. Task success
maps (user, bot) correctness letters onto a 6-level scale where any
bot-wrong outcome is the floor and both-correct is the ceiling.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from .assets import reference_data_path
from .errors import ConfigError
from .orchestrator import Stage

STAGE_ORDER = tuple(Stage)
_INDEX = {stage: i for i, stage in enumerate(STAGE_ORDER)}

LETTERS = ("c", "p", "w")  # correct, partially correct, wrong

_LEVELS = {
    ("w", "w"): 1,
    ("p", "w"): 1,
    ("c", "w"): 1,
    ("w", "p"): 2,
    ("p", "p"): 2,
    ("w", "c"): 3,
    ("c", "p"): 4,
    ("p", "c"): 5,
    ("c", "c"): 6,
}


@dataclass(frozen=True)
class SuccessLevel:
    user: str
    bot: str
    level: int


def classify(user: str, bot: str) -> SuccessLevel:
    """Map a (user, bot) correctness pair to its 1..6 success level."""
    if user not in LETTERS or bot not in LETTERS:
        raise ConfigError(f"correctness letters must be one of {LETTERS}, got ({user!r}, {bot!r})")
    return SuccessLevel(user=user, bot=bot, level=_LEVELS[(user, bot)])


class TransitionMatrix:
    """5x5 stage-transition counts with turns-normalized fractions."""

    def __init__(self, counts: list[list[int]] | None = None, total_turns: int = 0) -> None:
        if counts is None:
            counts = [[0] * len(STAGE_ORDER) for _ in STAGE_ORDER]
        self.counts = counts
        self.total_turns = total_turns

    @property
    def total_transitions(self) -> int:
        return sum(sum(row) for row in self.counts)

    @property
    def normalized(self) -> list[list[float]]:
        if self.total_turns == 0:
            return [[0.0] * len(STAGE_ORDER) for _ in STAGE_ORDER]
        return [[cell / self.total_turns for cell in row] for row in self.counts]

    def cell(self, source: Stage, target: Stage) -> int:
        return self.counts[_INDEX[source]][_INDEX[target]]

    def __add__(self, other: "TransitionMatrix") -> "TransitionMatrix":
        counts = [
            [a + b for a, b in zip(row_a, row_b)]
            for row_a, row_b in zip(self.counts, other.counts)
        ]
        return TransitionMatrix(counts, self.total_turns + other.total_turns)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TransitionMatrix):
            return NotImplemented
        return self.counts == other.counts and self.total_turns == other.total_turns

    def to_dict(self) -> dict:
        return {
            "stages": [s.value for s in STAGE_ORDER],
            "counts": [list(row) for row in self.counts],
            "total_turns": self.total_turns,
            "normalized": self.normalized,
        }


def transitions(conversations: list[list[Stage]]) -> TransitionMatrix:
    """Count consecutive stage pairs per conversation; never across them."""
    matrix = TransitionMatrix()
    for stages in conversations:
        matrix.total_turns += len(stages)
        for source, target in zip(stages, stages[1:]):
            matrix.counts[_INDEX[source]][_INDEX[target]] += 1
    return matrix


def stages_from_transcript(lines: list[str], where: str = "transcript") -> list[Stage]:
    """Stage tags of one conversation from its JSON-lines transcript."""
    stages = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            tag = record["turn"]["stage"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"{where}:{lineno}: not a turn-log line ({exc})")
        try:
            stages.append(Stage(tag))
        except ValueError:
            raise ConfigError(f"{where}:{lineno}: unknown stage tag {tag!r}")
    return stages


# ---------------------------------------------------------------------------
# Reference matrices (quoted normalized cells only; the rest is unknown)
# ---------------------------------------------------------------------------


def load_reference_matrices() -> dict[str, dict[str, float]]:
    """Published normalized cells keyed 'vr'/'ar' then 'From->To'."""
    path = reference_data_path("reference-transitions")
    doc = json.loads(path.read_text(encoding="utf-8"))
    out: dict[str, dict[str, float]] = {}
    for key, cells in doc.items():
        out[key] = {name: float(value) for name, value in cells.items()}
    return out


def _reference_cell(cells: dict[str, float], source: Stage, target: Stage) -> float | None:
    return cells.get(f"{source.name}->{target.name}")


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render_report(
    matrix: TransitionMatrix,
    reference: dict[str, dict[str, float]] | None = None,
) -> str:
    """Fixed-width table of normalized cells, optional published columns."""
    lines = []
    header = ["from\\to"] + [s.name for s in STAGE_ORDER]
    widths = [9] + [8] * len(STAGE_ORDER)
    lines.append(_row(header, widths))
    normalized = matrix.normalized
    for i, source in enumerate(STAGE_ORDER):
        cells = [f"{normalized[i][j]:.3f}" for j in range(len(STAGE_ORDER))]
        lines.append(_row([source.name] + cells, widths))
    lines.append("")
    lines.append(
        f"{matrix.total_transitions} transitions over {matrix.total_turns} turns; "
        "cells are counts divided by total turns."
    )
    if reference:
        for key in sorted(reference):
            lines.append("")
            lines.append(f"published {key} cells:")
            for source in STAGE_ORDER:
                for target in STAGE_ORDER:
                    value = _reference_cell(reference[key], source, target)
                    if value is None:
                        continue
                    ours = normalized[_INDEX[source]][_INDEX[target]]
                    lines.append(
                        f"  {source.name}->{target.name}: {value:.3f} (observed {ours:.3f})"
                    )
    return "\n".join(lines) + "\n"


def _row(cells: list[str], widths: list[int]) -> str:
    return "  ".join(cell.ljust(width) for cell, width in zip(cells, widths)).rstrip()


def render_csv(matrix: TransitionMatrix) -> str:
    """Long-format CSV: from,to,count,normalized (RFC-4180 line endings)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["from", "to", "count", "normalized"])
    normalized = matrix.normalized
    for i, source in enumerate(STAGE_ORDER):
        for j, target in enumerate(STAGE_ORDER):
            writer.writerow(
                [source.name, target.name, matrix.counts[i][j], f"{normalized[i][j]:.6f}"]
            )
    return buffer.getvalue()
