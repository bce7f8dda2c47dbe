"""Bug-injection plans.

Each variant flips exactly one hook in the qs/gp/api code paths.  Plans
are plain runtime configuration so a single build can reproduce every
scenario.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TypeVar

T = TypeVar("T")


class Variant(enum.Enum):
    NONE = "none"
    BUG1 = "bug1"
    BUG2 = "bug2"
    BUG3 = "bug3"
    BUG4 = "bug4"
    BUG5 = "bug5"
    BUG6 = "bug6"
    BUG7 = "bug7"


class ExpectedClass(enum.Enum):
    SAFE = "SAFE"
    SAFETY_VIOLATION = "SAFETY_VIOLATION"
    LIVENESS_HANG = "LIVENESS_HANG"


class Hook(enum.Enum):
    SYNC_RETURN_EARLY = "synchronize-entry"          # bug 1
    GP_INIT_QSMASK_ZERO = "gp-init-qsmask"           # bug 2
    NOTE_GP_CLEAR_QSMASK = "note-gp-clear-qsmask"    # bug 3
    NOTE_GP_QS_PENDING_ZERO = "note-gp-qs-pending"   # bug 4
    SCHED_QS_NOOP = "sched-qs"                       # bug 5
    RNP_RETURN_EARLY = "rnp-entry"                   # bug 6
    RNP_SKIP_STOP_CHECK = "rnp-walk-stop-check"      # bug 7


HOOK_OF = {
    Variant.BUG1: Hook.SYNC_RETURN_EARLY,
    Variant.BUG2: Hook.GP_INIT_QSMASK_ZERO,
    Variant.BUG3: Hook.NOTE_GP_CLEAR_QSMASK,
    Variant.BUG4: Hook.NOTE_GP_QS_PENDING_ZERO,
    Variant.BUG5: Hook.SCHED_QS_NOOP,
    Variant.BUG6: Hook.RNP_RETURN_EARLY,
    Variant.BUG7: Hook.RNP_SKIP_STOP_CHECK,
}

CAVEATS = {
    Variant.BUG2: "would instead shorten grace periods if quiescent-state forcing were modeled",
    Variant.BUG3: "would instead shorten grace periods if quiescent-state forcing were modeled",
}


class FaultConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FaultPlan:
    variant: Variant = Variant.NONE

    def __post_init__(self) -> None:
        if not isinstance(self.variant, Variant):
            raise FaultConfigError(f"unknown fault variant {self.variant!r}")

    @classmethod
    def parse(cls, name: str | None) -> FaultPlan:
        if name is None:
            return cls()
        try:
            return cls(Variant(name.lower()))
        except ValueError:
            raise FaultConfigError(f"unknown fault variant {name!r}") from None

    @property
    def expected_class(self) -> ExpectedClass:
        if self.variant is Variant.NONE:
            return ExpectedClass.SAFE
        if self.variant in (Variant.BUG1, Variant.BUG7):
            return ExpectedClass.SAFETY_VIOLATION
        return ExpectedClass.LIVENESS_HANG

    @property
    def caveat(self) -> str | None:
        return CAVEATS.get(self.variant)

    def active(self, hook: Hook) -> bool:
        if not isinstance(hook, Hook):
            raise FaultConfigError(f"unknown hook {hook!r}")
        return HOOK_OF.get(self.variant) is hook


def apply(plan: FaultPlan, hook: Hook, default: T, mutated: T) -> T:
    """``mutated`` when ``plan`` targets ``hook``, otherwise ``default``."""
    return mutated if plan.active(hook) else default
