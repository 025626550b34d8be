"""Seeded synthetic ATIS-style corpus for demos and desk-scale checks.

Most utterances come from intent-specific templates with shared slot
values.  A fraction are label-ambiguous ("tell me about boston monday")
and carry a random intent; a classifier can only get those right by
memorising them, which gives membership inference something to find.
"""

from __future__ import annotations

import numpy as np

from adept.text_data import LabeledUtterance

CITIES = (
    "boston denver seattle dallas atlanta miami chicago phoenix detroit houston "
    "oakland tampa memphis orlando newark toronto baltimore pittsburgh nashville charlotte"
).split()
DAYS = "monday tuesday wednesday thursday friday saturday sunday".split()
TIMES = ["in the morning", "in the evening", "after noon", "before noon", "tonight", "early"]

TEMPLATES = {
    "Flight": [
        "show me flights from {c1} to {c2}",
        "i need a flight from {c1} to {c2} on {day}",
        "list flights to {c2} {time}",
        "are there any flights leaving {c1} {time}",
    ],
    "Fare": [
        "how much is a ticket from {c1} to {c2}",
        "what is the cheapest fare to {c2}",
        "show fares from {c1} to {c2} on {day}",
        "what does a round trip to {c2} cost",
    ],
    "GroundService": [
        "what ground transportation is available in {c1}",
        "is there a rental car at the {c1} airport",
        "how do i get downtown in {c2} {time}",
        "find a taxi from the {c1} airport",
    ],
    "Airline": [
        "which airlines fly from {c1} to {c2}",
        "what airline serves {c2}",
        "list airlines flying to {c2} {time}",
        "does any airline go from {c1} to {c2} on {day}",
    ],
}
AMBIGUOUS = [
    "tell me about {c1} {day}",
    "{c1} to {c2} {time}",
    "information on {c2} {day} {time}",
    "{c1} {c2} please",
]


def toy_intents(n: int = 200, n_intents: int = 4, ambiguous_frac: float = 0.3, seed: int = 0) -> list:
    """Generate ``n`` labelled utterances over the first ``n_intents`` intents."""
    if not 2 <= n_intents <= len(TEMPLATES):
        raise ValueError(f"n_intents must be in [2, {len(TEMPLATES)}]")
    rng = np.random.default_rng(seed)
    labels = list(TEMPLATES)[:n_intents]
    out = []
    for i in range(n):
        label = labels[i % n_intents]
        if rng.random() < ambiguous_frac:
            tmpl = AMBIGUOUS[rng.integers(len(AMBIGUOUS))]
        else:
            pool = TEMPLATES[label]
            tmpl = pool[rng.integers(len(pool))]
        c1, c2 = rng.choice(CITIES, size=2, replace=False)
        text = tmpl.format(c1=c1, c2=c2, day=DAYS[rng.integers(len(DAYS))], time=TIMES[rng.integers(len(TIMES))])
        out.append(LabeledUtterance.from_text(text, label))
    return out


def tiny_corpus() -> list:
    """Eight utterances over two intents."""
    rows = [
        ("show me flights from boston to denver", "Flight"),
        ("list flights to seattle tomorrow", "Flight"),
        ("i want a flight from dallas to miami", "Flight"),
        ("what flights leave atlanta in the morning", "Flight"),
        ("how much is a ticket to chicago", "Fare"),
        ("what is the cheapest fare to denver", "Fare"),
        ("show fares from boston to seattle", "Fare"),
        ("price of a first class ticket to miami", "Fare"),
    ]
    return [LabeledUtterance.from_text(t, lab) for t, lab in rows]
