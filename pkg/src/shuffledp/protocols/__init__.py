from .nested import (
    FixedOutcome,
    HeavyHitterSub,
    NestedInput,
    NestedTwoRoundResult,
    TwoRoundSub,
    classify_nested_failure,
    nested_one_round,
    nested_one_round_spec,
    nested_trials,
    nested_two_round,
)
from .outcome import ElementOutcome, Status
from .prelude import classify_failure, common_prelude, common_prelude_spec, failure_bounds, prelude_trials
from .toys import identity_spec, input_ignoring_spec, shuffled_rr_spec
from .two_round import common_two_round, common_two_round_spec, two_round_vectorized

__all__ = [
    "ElementOutcome",
    "FixedOutcome",
    "HeavyHitterSub",
    "NestedInput",
    "NestedTwoRoundResult",
    "Status",
    "TwoRoundSub",
    "classify_failure",
    "classify_nested_failure",
    "common_prelude",
    "common_prelude_spec",
    "common_two_round",
    "common_two_round_spec",
    "failure_bounds",
    "identity_spec",
    "input_ignoring_spec",
    "nested_one_round",
    "nested_one_round_spec",
    "nested_trials",
    "nested_two_round",
    "prelude_trials",
    "shuffled_rr_spec",
    "two_round_vectorized",
]
