from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any


class Status(str, Enum):
    FOUND = "found"
    BOTTOM = "bottom"
    FAIL = "fail"


@dataclass(frozen=True)
class ElementOutcome:
    status: Status
    element: Any = None

    def __post_init__(self):
        if (self.status is Status.FOUND) != (self.element is not None):
            raise ValueError("element must be present exactly when status is FOUND")

    @classmethod
    def found(cls, element: Any) -> "ElementOutcome":
        return cls(Status.FOUND, element)

    @classmethod
    def bottom(cls) -> "ElementOutcome":
        return cls(Status.BOTTOM)

    @classmethod
    def fail(cls) -> "ElementOutcome":
        return cls(Status.FAIL)

    def judged(self, expected: Any) -> "ElementOutcome":
        """Harness view: a found element that differs from ``expected`` counts as FAIL."""
        if self.status is Status.FOUND and self.element != expected:
            return ElementOutcome.fail()
        return self

    def to_dict(self) -> dict:
        return {"status": self.status.value, "element": self.element}


FOUND = Status.FOUND
BOTTOM = Status.BOTTOM
FAIL = Status.FAIL
