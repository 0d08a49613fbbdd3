"""The closed set of architectural pattern categories."""

from __future__ import annotations

import enum


class PatternLabel(str, enum.Enum):
    BROKER = "broker"
    LAYERED = "layered"
    EVENT_BUS = "event-bus"
    PIPE_AND_FILTER = "pipe-and-filter"
    REPOSITORY = "repository"
    MICROKERNEL = "microkernel"
    MICROSERVICES = "microservices"
    MODEL_VIEW_CONTROLLER = "model-view-controller"
    PEER_TO_PEER = "peer-to-peer"
    PRESENTATION_ABSTRACTION_CONTROLLER = "presentation-abstraction-controller"
    CLIENT_SERVER = "client-server"
    SPACE_BASED = "space-based"
    REST = "rest"
    PUBLISHER_SUBSCRIBER = "publisher-subscriber"

    def __str__(self) -> str:
        return self.value

    @property
    def ordinal(self) -> int:
        return _ORDER.index(self)

    @classmethod
    def from_ordinal(cls, i: int) -> "PatternLabel":
        if not 0 <= i < len(_ORDER):
            raise ValueError(f"label ordinal {i} out of range")
        return _ORDER[i]

    @classmethod
    def parse(cls, text: str) -> "PatternLabel":
        key = text.strip().lower()
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown pattern label {text!r}; valid labels: {', '.join(valid_labels())}")


_ORDER = list(PatternLabel)


def valid_labels() -> list[str]:
    return [p.value for p in PatternLabel]
