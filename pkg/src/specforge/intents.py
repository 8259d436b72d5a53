"""Per-context intent generation and the greedy ROUGE-L diversity filter."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from specforge.contexts import schema_prompt_block
from specforge.kernels import lcs_length
from specforge.llm import Backend, FewShotExemplar, PromptRequest, assemble_prompt, complete
from specforge.model import Intent, ProgrammaticContext

DEFAULT_INTENTS_PER_CONTEXT = 6
DEFAULT_ROUGE_THRESHOLD = 0.7

DROP_DUPLICATE = "duplicate"
DROP_ROUGE = "rouge_overlap"
DROP_UNPARSEABLE = "unparseable"

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_TASK_LINE_RE = re.compile(r"^Task\s+\d+\s*:\s*(.*)$")


class UnparseableCompletion(Exception):
    """The intent-writer completion contained no task lines."""


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on non-alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


def rouge_l(a: Sequence[str], b: Sequence[str], mode: str = "f") -> float:
    """ROUGE-L overlap of two token lists.

    Precision is LCS/|a|, recall is LCS/|b|, and the default F-measure is
    2PR/(P+R). Zero when either list is empty or nothing is shared.
    """
    if not a or not b:
        return 0.0
    ids: dict[str, int] = {}
    xs = [ids.setdefault(t, len(ids)) for t in a]
    ys = [ids.setdefault(t, len(ids)) for t in b]
    lcs = lcs_length(xs, ys)
    if lcs == 0:
        return 0.0
    precision = lcs / len(a)
    recall = lcs / len(b)
    if mode == "p":
        return precision
    if mode == "r":
        return recall
    if mode == "f":
        return 2 * precision * recall / (precision + recall)
    raise ValueError(f"unknown rouge mode: {mode!r}")


def diversity_filter(
    candidates: Sequence[str],
    threshold: float = DEFAULT_ROUGE_THRESHOLD,
    mode: str = "f",
    rng: Optional[random.Random] = None,
) -> tuple[list[str], list[tuple[str, str]]]:
    """Greedy overlap filter: keep a candidate only while it stays dissimilar.

    The kept set is seeded with the first candidate (or a uniformly random
    one when ``rng`` is given); every later candidate survives iff its
    overlap with each already-kept item is below the threshold. Exact
    duplicates of kept items are always dropped. Returns (kept, dropped)
    where each dropped entry carries its reason.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    items = list(candidates)
    if not items:
        return [], []

    seed_index = rng.randrange(len(items)) if rng is not None else 0
    kept = [items[seed_index]]
    kept_tokens = [tokenize(items[seed_index])]
    dropped: list[tuple[str, str]] = []

    for index, text in enumerate(items):
        if index == seed_index:
            continue
        if text in kept:
            dropped.append((text, DROP_DUPLICATE))
            continue
        tokens = tokenize(text)
        if any(rouge_l(tokens, other, mode) >= threshold for other in kept_tokens):
            dropped.append((text, DROP_ROUGE))
            continue
        kept.append(text)
        kept_tokens.append(tokens)
    return kept, dropped


@dataclass(frozen=True)
class IntentBatch:
    """Raw, kept, and dropped intents for one context."""

    context_id: str
    raw: tuple
    kept: tuple
    dropped: tuple  # ((text, reason), ...)

    def __post_init__(self) -> None:
        object.__setattr__(self, "raw", tuple(self.raw))
        object.__setattr__(self, "kept", tuple(self.kept))
        object.__setattr__(self, "dropped", tuple(tuple(d) for d in self.dropped))
        kept_texts = sorted(i.text for i in self.kept)
        combined = sorted(list(kept_texts) + [text for text, _ in self.dropped])
        if combined != sorted(self.raw):
            raise ValueError("kept plus dropped must equal raw as multisets")


def parse_task_lines(completion: str) -> list[str]:
    """Extract "Task k: ..." entries; later lines continue the current task."""
    tasks: list[str] = []
    current: Optional[list[str]] = None
    for line in completion.splitlines():
        match = _TASK_LINE_RE.match(line.strip())
        if match:
            if current is not None:
                tasks.append(" ".join(current).strip())
            current = [match.group(1).strip()]
        elif current is not None and line.strip():
            current.append(line.strip())
    if current is not None:
        tasks.append(" ".join(current).strip())
    return tasks


def intent_payload(context: ProgrammaticContext, n: int) -> str:
    return (
        f"{schema_prompt_block(context)}\n\n"
        f"Here are a series of {n} contextually dependent data wrangling and "
        "exploratory data analysis tasks for the dataset:\n"
    )


def generate_intents(
    context: ProgrammaticContext,
    n: int = DEFAULT_INTENTS_PER_CONTEXT,
    backend: Backend = None,
    exemplars: Sequence[FewShotExemplar] = (),
    threshold: float = DEFAULT_ROUGE_THRESHOLD,
    mode: str = "f",
    seed: int = 0,
    rng: Optional[random.Random] = None,
    temperature: float = 0.8,
    max_tokens: int = 1024,
) -> IntentBatch:
    """Sample one intent-writer completion and filter it into Intents.

    Parsed tasks get ordinals by appearance order; ``rng`` switches the
    filter to random seeding of the kept set.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    prompt = assemble_prompt("intent_gen", exemplars, intent_payload(context, n))
    request = PromptRequest(
        role="generalist",
        prompt_text=prompt,
        n_samples=1,
        temperature=temperature,
        max_tokens=max_tokens,
        stop_sequences=("[END]",),
        seed=seed,
    )
    completion = complete(request, backend)[0]
    parsed = parse_task_lines(completion)
    if not parsed:
        raise UnparseableCompletion(
            f"no task lines in completion for context {context.context_id}"
        )

    dropped = [(text, DROP_UNPARSEABLE) for text in parsed if not text]
    usable = [text for text in parsed if text]
    ordinals = {}
    for position, text in enumerate(usable, start=1):
        ordinals.setdefault(text, position)

    kept_texts, filter_dropped = diversity_filter(usable, threshold, mode, rng)
    dropped.extend(filter_dropped)
    kept = tuple(
        Intent.create(context.context_id, ordinals[text], text)
        for text in sorted(kept_texts, key=lambda t: ordinals[t])
    )
    return IntentBatch(
        context_id=context.context_id,
        raw=tuple(parsed),
        kept=kept,
        dropped=tuple(dropped),
    )
