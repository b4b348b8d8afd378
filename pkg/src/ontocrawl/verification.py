"""Four-step candidate verification with a single rename fallback.

A discovered name D (candidate subcategory of C inside seed C0) must survive,
in order: not an instance of the domain, not a part, acceptable under the
seed, and understood as a subcategory of C.  The check short-circuits at the
first failure.  Failing step 1 or 2 rejects immediately; failing step 3 or 4
grants one rename attempt from D's description, after which all four steps
run once more on the new name.  Inconclusive oracle answers reject without a
rename.  Worst case: 4 + 1 + 4 oracle calls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .errors import OracleError
from .hierarchy import normalize_name
from .oracle import KnowledgeOracle, OracleContext

logger = logging.getLogger(__name__)

ACCEPTED = "accepted"
ACCEPTED_RENAMED = "accepted_renamed"
REJECTED = "rejected"

REASON_INSTANCE = "instance"
REASON_PART = "part"
REASON_NOT_UNDER_SEED = "not_under_seed"
REASON_NOT_UNDER_PARENT = "not_under_parent"
REASON_RENAME_FAILED = "rename_failed"

INCONCLUSIVE = "inconclusive"

_STEPS = (
    ("instance", REASON_INSTANCE),
    ("part", REASON_PART),
    ("under_seed", REASON_NOT_UNDER_SEED),
    ("under_parent", REASON_NOT_UNDER_PARENT),
)


@dataclass
class Verdict:
    """Outcome of one verification run.

    ``transcript`` lists (step, answer) pairs in the order the oracle was
    consulted, including the rename attempt and any second pass.
    """

    outcome: str
    new_name: str | None = None
    reason: str | None = None
    transcript: list[tuple[str, object]] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.outcome in (ACCEPTED, ACCEPTED_RENAMED)


def _run_steps(
    oracle: KnowledgeOracle,
    ctx: OracleContext,
    d: str,
    c: str,
    transcript: list[tuple[str, object]],
) -> tuple[str | None, bool]:
    """Run steps 1..4 on name ``d``.

    Returns (failed_reason, conclusive); (None, True) means all passed.
    """
    for step, reason in _STEPS:
        try:
            if step == "instance":
                bad = oracle.is_instance(ctx, d)
                answer: object = bad
            elif step == "part":
                bad = oracle.is_part(ctx, d)
                answer = bad
            elif step == "under_seed":
                ok = oracle.under_seed(ctx, d)
                answer, bad = ok, not ok
            else:
                ok = oracle.is_subcategory_of(ctx, d, c)
                answer, bad = ok, not ok
        except OracleError as exc:
            logger.warning("verification step %r inconclusive for %r: %s", step, d, exc)
            transcript.append((step, INCONCLUSIVE))
            return reason, False
        transcript.append((step, answer))
        if bad:
            return reason, True
    return None, True


def verify(oracle: KnowledgeOracle, ctx: OracleContext, d: str, c: str) -> Verdict:
    """Decide whether candidate ``d`` may enter the hierarchy below ``c``."""
    transcript: list[tuple[str, object]] = []
    reason, conclusive = _run_steps(oracle, ctx, d, c, transcript)
    if reason is None:
        return Verdict(ACCEPTED, transcript=transcript)
    if not conclusive or reason in (REASON_INSTANCE, REASON_PART):
        return Verdict(REJECTED, reason=reason, transcript=transcript)

    # Steps 3-4: the name may be sloppy; ask for a better one, once.
    description = _description_of(ctx, d)
    try:
        new_name = oracle.rename_from_description(ctx, c, description or "")
    except OracleError as exc:
        logger.warning("rename inconclusive for %r: %s", d, exc)
        transcript.append(("rename", INCONCLUSIVE))
        return Verdict(REJECTED, reason=REASON_RENAME_FAILED, transcript=transcript)
    transcript.append(("rename", new_name))
    if not new_name or normalize_name(new_name) == normalize_name(d):
        return Verdict(REJECTED, reason=REASON_RENAME_FAILED, transcript=transcript)

    ctx2 = replace(
        ctx,
        descriptions={**dict(ctx.descriptions), new_name: description or ""},
    )
    reason2, _ = _run_steps(oracle, ctx2, new_name, c, transcript)
    if reason2 is None:
        return Verdict(ACCEPTED_RENAMED, new_name=new_name, transcript=transcript)
    return Verdict(REJECTED, reason=reason2, transcript=transcript)


def _description_of(ctx: OracleContext, d: str) -> str | None:
    key = normalize_name(d)
    for name, text in ctx.descriptions.items():
        if normalize_name(name) == key and text:
            return text
    return None
