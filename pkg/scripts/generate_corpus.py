#!/usr/bin/env python3
"""Regenerate the bundled 50-dialog corpus (fixtures/corpus_50.jsonl).

Fully seeded: every byte of the output is a function of SEED, so the
checked-in corpus can be reproduced on any platform. The response phrasing
is aligned with fixtures/mock_rules.json so the mock ensemble produces a
spread of goal boundaries and failure codes.
"""

from __future__ import annotations

import sys
import uuid
from datetime import datetime, timedelta, timezone
from pathlib import Path
from random import Random

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from goaleval.dialog_model import (
    Device,
    Dialog,
    ExplicitFeedback,
    FeedbackSignals,
    Turn,
    serialize_dialog,
)

SEED = 20250042
N_DIALOGS = 50
OUT = Path(__file__).resolve().parents[1] / "fixtures" / "corpus_50.jsonl"

TOPICS = [
    ("submit my expense report", "Expenses portal", "Expense Guide"),
    ("apply for sick leave", "Leave workspace", "Leave Policy"),
    ("reset my VPN token", "IT self-service", "VPN Setup"),
    ("book a meeting room in building 4", "Rooms app", "Room Booking FAQ"),
    ("check my remaining PTO balance", "Leave workspace", "PTO Overview"),
    ("update my direct deposit details", "Payroll center", "Payroll How-To"),
    ("enroll in the commuter benefit", "Benefits hub", "Benefits Catalog"),
    ("find the travel reimbursement limits", "Expenses portal", "Travel Policy"),
]

# Failure responses carry the phrases the bundled ruleset keys on.
FAILURES = [
    "I can't help with that here.",
    "No results found for your query.",
    "Error: the request timed out before completion.",
    "According to the Holiday FAQ, offices close early on Fridays.",
    "Did you mean something else? I may have misread your request.",
    "Your question was routed to the general assistant, which has no access to that system.",
    "That topic is outside what I can support today.",
]

FOLLOW_UPS = [
    "That link is broken, can you re-check?",
    "Can you show the exact steps?",
    "Follow-up: does that also apply to contractors?",
    "It still does not work on my side.",
]


def success_turn_text(rng: Random, topic) -> tuple[str, str, tuple, tuple, tuple]:
    task, portal, doc = topic
    user = f"How do I {task}?"
    response = f"You can do that in the {portal}; the {doc} walks through each step."
    if rng.random() < 0.7:
        urls = (f"kb://{doc.lower().replace(' ', '-')}",)
        names = (doc,)
        snippets = (f"{doc}: open the {portal} and follow the checklist.",)
        return user, response, urls, names, snippets
    return user, response, (), (), ()


def build_dialog(rng: Random, index: int) -> Dialog:
    dialog_id = str(uuid.UUID(int=rng.getrandbits(128), version=4))
    n_turns = rng.choice([1, 1, 1, 1, 2, 2, 3, 3, 4, 5])
    month = [10, 11, 12][index % 3]
    start = datetime(2024, month, 1 + index % 27, 9, 0, tzinfo=timezone.utc)
    device = rng.choice([Device.DESKTOP, Device.DESKTOP, Device.MOBILE, None])

    turns = []
    topic = rng.choice(TOPICS)
    for t in range(n_turns):
        new_goal = t > 0 and rng.random() < 0.35
        if t == 0:
            user, response, urls, names, snippets = success_turn_text(rng, topic)
        elif new_goal:
            topic = rng.choice(TOPICS)
            user, response, urls, names, snippets = success_turn_text(rng, topic)
            user = f"New question: {user[0].lower()}{user[1:]}"
        else:
            user = rng.choice(FOLLOW_UPS)
            response = f"Here is a more detailed walkthrough for {topic[0]}."
            urls, names, snippets = (), (), ()
        if rng.random() < 0.28:
            response = rng.choice(FAILURES)
            urls, names, snippets = (), (), ()

        failed = any(
            phrase in response.lower()
            for phrase in (
                "can't help",
                "no results",
                "timed out",
                "holiday faq",
                "did you mean",
                "general assistant",
                "outside what i can support",
            )
        )
        feedback = None
        if failed and rng.random() < 0.4:
            feedback = FeedbackSignals(
                explicit=ExplicitFeedback.THUMBS_DOWN,
                rephrased=rng.random() < 0.5,
            )
        elif not failed and rng.random() < 0.15:
            feedback = FeedbackSignals(explicit=ExplicitFeedback.THUMBS_UP)

        turns.append(
            Turn(
                turn_number=t + 1,
                user_msg=user,
                response=response,
                source_urls=urls,
                source_names=names,
                source_snippets=snippets,
                feedback=feedback,
                timestamp=start + timedelta(minutes=3 * t),
                device=device,
            )
        )
    return Dialog(dialog_id=dialog_id, turns=tuple(turns))


def main() -> None:
    rng = Random(SEED)
    dialogs = [build_dialog(rng, i) for i in range(N_DIALOGS)]
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", encoding="utf-8", newline="\n") as fh:
        for d in dialogs:
            fh.write(serialize_dialog(d) + "\n")
    multi = sum(1 for d in dialogs if d.is_multi_turn)
    print(f"wrote {len(dialogs)} dialogs ({multi} multi-turn) -> {OUT}")


if __name__ == "__main__":
    main()
