"""User click primitives.

A click is a pixel coordinate plus a polarity: positive clicks mark the
object, negative clicks mark background. Ordinals record the order clicks
were issued in, which the interaction loop and the service replay rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

POSITIVE = 1
NEGATIVE = 0


@dataclass(frozen=True)
class Click:
    row: int
    col: int
    polarity: int  # POSITIVE or NEGATIVE
    ordinal: int

    def __post_init__(self):
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise ValueError(f"polarity must be 0 or 1, got {self.polarity}")
        if self.row < 0 or self.col < 0:
            raise ValueError(f"click at negative coordinate ({self.row}, {self.col})")
        if self.ordinal < 0:
            raise ValueError(f"negative ordinal {self.ordinal}")


@dataclass
class ClickSet:
    """Ordered collection of clicks inside an height x width frame."""

    height: int
    width: int
    clicks: list[Click] = field(default_factory=list)

    def __post_init__(self):
        for c in self.clicks:
            self._check_bounds(c)

    def _check_bounds(self, c: Click) -> None:
        if c.row >= self.height or c.col >= self.width:
            raise ValueError(
                f"click ({c.row}, {c.col}) outside {self.height}x{self.width} frame")

    def add(self, row: int, col: int, polarity: int) -> Click:
        c = Click(row, col, polarity, ordinal=len(self.clicks))
        self._check_bounds(c)
        self.clicks.append(c)
        return c

    def pop(self) -> Click:
        if not self.clicks:
            raise IndexError("pop from empty click set")
        return self.clicks.pop()

    @property
    def positives(self) -> list[Click]:
        return [c for c in self.clicks if c.polarity == POSITIVE]

    @property
    def negatives(self) -> list[Click]:
        return [c for c in self.clicks if c.polarity == NEGATIVE]

    def __len__(self) -> int:
        return len(self.clicks)

    def __iter__(self):
        return iter(self.clicks)
