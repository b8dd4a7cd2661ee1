"""Rendering-state labels."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from renderwait.errors import InvalidArgument


class Label(str, enum.Enum):
    FULLY_RENDERED = "FullyRendered"
    PARTIAL = "Partial"


class PartialKind(str, enum.Enum):
    TRANSITING = "Transiting"
    LOADING = "Loading"


@dataclass(frozen=True)
class RenderState:
    label: Label
    kind: PartialKind | None = None

    def __post_init__(self) -> None:
        if self.label is Label.FULLY_RENDERED and self.kind is not None:
            raise InvalidArgument("a fully rendered state has no partial kind")

    @property
    def is_full(self) -> bool:
        return self.label is Label.FULLY_RENDERED

    @classmethod
    def parse(cls, label: str, kind: str | None = None) -> RenderState:
        return cls(Label(label), PartialKind(kind) if kind else None)


FULL = RenderState(Label.FULLY_RENDERED)
TRANSITING = RenderState(Label.PARTIAL, PartialKind.TRANSITING)
LOADING = RenderState(Label.PARTIAL, PartialKind.LOADING)
