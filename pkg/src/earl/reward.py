"""Cascaded verifiable reward: syntax -> interface -> functional equivalence.

Stage 1 parses the candidate (truncated rollouts count as parse failures and
earn zero). Stage 2 scores module name and port agreement. Stage 3 runs only
on a full interface match and grades the fraction of matching output bits,
with full equivalence required for the maximal reward. The numeric schedule
keeps near-misses strictly below the pass reward.
"""

from __future__ import annotations

from dataclasses import dataclass

from .minirtl import (Interface, InterfaceMismatch, MiniRtlError, parse)
from .minirtl.sim import equivalence_fraction
from .minirtl.vocab import DEFAULT_VOCAB, EOS, Vocab

STAGE_PARSE_FAIL = "lex/parse-fail"
STAGE_INTERFACE = "interface"
STAGE_FUNCTIONAL = "functional"


@dataclass(frozen=True)
class RewardSchedule:
    """Reward values; the ordering contract is parse-fail < interface-partial
    <= interface-full <= near-miss < pass. Overridable via configuration."""
    parse_fail: float = 0.0
    interface_base: float = 0.2
    interface_span: float = 0.3
    functional_base: float = 0.5
    functional_span: float = 0.4
    pass_reward: float = 1.0

    def validate(self) -> None:
        ok = (0.0 <= self.parse_fail <= self.interface_base
              and self.interface_base + self.interface_span
              <= self.functional_base
              and self.functional_base + self.functional_span
              <= self.pass_reward)
        if not ok:
            from .errors import ConfigError
            raise ConfigError("reward schedule violates stage ordering")


DEFAULT_SCHEDULE = RewardSchedule()


@dataclass(frozen=True)
class RewardBreakdown:
    syntax_ok: bool
    interface_score: float
    functional_fraction: float
    functional_pass: bool
    reward: float
    stage_reached: str


def interface_score(candidate: Interface, target: Interface) -> float:
    """0.25 for the module name plus 0.75 times the fraction of target ports
    matched on (name, direction, width). Extra candidate ports earn nothing
    but cost nothing."""
    name = 0.25 if candidate.module_name == target.module_name else 0.0
    cand = {(p.name, p.direction, p.width) for p in candidate.ports}
    matched = sum(1 for p in target.ports
                  if (p.name, p.direction, p.width) in cand)
    return name + 0.75 * matched / len(target.ports)


def score(candidate_tokens, task, schedule: RewardSchedule = DEFAULT_SCHEDULE,
          vocab: Vocab = DEFAULT_VOCAB, truncated: bool = False
          ) -> RewardBreakdown:
    """Run the cascade on a candidate token sequence for a task.

    A trailing EOS is stripped before parsing. All failure modes map to
    breakdown fields; nothing raises.
    """
    tokens = list(candidate_tokens)
    if tokens and vocab.token(tokens[-1]) == EOS:
        tokens = tokens[:-1]
    if truncated:
        return RewardBreakdown(False, 0.0, 0.0, False, schedule.parse_fail,
                               STAGE_PARSE_FAIL)
    try:
        candidate = parse(tokens, vocab)
    except MiniRtlError:
        return RewardBreakdown(False, 0.0, 0.0, False, schedule.parse_fail,
                               STAGE_PARSE_FAIL)

    target = task.reference.interface
    s = interface_score(candidate.interface, target)
    if s < 1.0:
        reward = schedule.interface_base + schedule.interface_span * s
        return RewardBreakdown(True, s, 0.0, False, reward, STAGE_INTERFACE)

    try:
        m, equivalent = equivalence_fraction(candidate, task.reference,
                                             task.vectors)
    except InterfaceMismatch:
        # Full target match but extra candidate outputs: interface-stage
        # credit only.
        reward = schedule.interface_base + schedule.interface_span
        return RewardBreakdown(True, s, 0.0, False, reward, STAGE_INTERFACE)

    if equivalent:
        return RewardBreakdown(True, s, m, True, schedule.pass_reward,
                               STAGE_FUNCTIONAL)
    reward = schedule.functional_base + schedule.functional_span * m
    return RewardBreakdown(True, s, m, False, reward, STAGE_FUNCTIONAL)


def is_pass(breakdown: RewardBreakdown) -> bool:
    return breakdown.functional_pass
