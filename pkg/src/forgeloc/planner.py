"""Content-driven transcript manipulation planning.

Given a word-timed transcript, a sentiment lexicon, and an antonym
dictionary, pick the antonym substitutions that change the transcript
sentiment the most, subject to a duration-based replacement budget
(1 replacement under 10 seconds, otherwise 2).  The chosen tokens' time
spans become the fake segments of the emitted annotations.

The sentiment scorer is pluggable: any callable mapping a token list to a
signed score.  The reference scorer sums lexicon valences, which keeps the
search exactly checkable by brute-force enumeration.
"""

from __future__ import annotations

import itertools
import json
import math
import string
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from .types import Segment, VideoAnnotation

LONG_TRANSCRIPT_SECONDS = 10.0
_STRIP = string.punctuation + string.whitespace

Scorer = Callable[[Sequence[str]], float]


def normalize_token(text: str) -> str:
    """Lowercased token with surrounding punctuation/whitespace stripped."""
    return text.strip(_STRIP).lower()


@dataclass(frozen=True)
class TranscriptToken:
    text: str
    start: float
    end: float

    def __post_init__(self):
        if self.end <= self.start or self.start < 0:
            raise ValueError(f"bad token timing: {self!r}")


@dataclass(frozen=True)
class Transcript:
    tokens: tuple[TranscriptToken, ...]
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        for tok in self.tokens:
            if tok.end > self.duration + 1e-9:
                raise ValueError(f"token {tok!r} ends after transcript duration")
        for prev, cur in zip(self.tokens, self.tokens[1:]):
            if cur.start < prev.end - 1e-9:
                raise ValueError(f"tokens overlap or are out of order: {prev!r}, {cur!r}")

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    @property
    def budget(self) -> int:
        return 1 if self.duration < LONG_TRANSCRIPT_SECONDS else 2


class SentimentLexicon:
    """word -> signed valence; unknown words score 0."""

    def __init__(self, valences: dict[str, float]):
        self._valences = {normalize_token(w): float(v) for w, v in valences.items()}
        if not all(math.isfinite(v) for v in self._valences.values()):
            raise ValueError("valences must be finite")

    def valence(self, word: str) -> float:
        return self._valences.get(normalize_token(word), 0.0)

    def score(self, tokens: Sequence[str]) -> float:
        """Reference additive scorer: sum of known-token valences."""
        return sum(self.valence(t) for t in tokens)

    @classmethod
    def from_tsv(cls, path: str | Path) -> "SentimentLexicon":
        valences = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            word, value = line.split("\t")[:2]
            valences[word] = float(value)
        return cls(valences)


class AntonymDictionary:
    """word -> antonym candidates; no word may be its own antonym."""

    def __init__(self, antonyms: dict[str, Sequence[str]]):
        self._antonyms: dict[str, tuple[str, ...]] = {}
        for word, alts in antonyms.items():
            key = normalize_token(word)
            vals = tuple(sorted({normalize_token(a) for a in alts}))
            if key in vals:
                raise ValueError(f"{word!r} listed as its own antonym")
            if vals:
                self._antonyms[key] = vals

    def antonyms(self, word: str) -> tuple[str, ...]:
        return self._antonyms.get(normalize_token(word), ())

    @classmethod
    def from_tsv(cls, path: str | Path) -> "AntonymDictionary":
        table: dict[str, list[str]] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            table.setdefault(parts[0], []).extend(parts[1:])
        return cls(table)


@dataclass(frozen=True)
class Replacement:
    token_index: int
    original: str
    replacement: str
    delta_s: float  # signed sentiment change of this single substitution


@dataclass(frozen=True)
class ManipulationPlan:
    replacements: tuple[Replacement, ...]
    total_delta: float
    fake_segments: tuple[Segment, ...]

    @property
    def is_empty(self) -> bool:
        return not self.replacements


def sentiment(transcript: Transcript, lexicon: SentimentLexicon) -> float:
    """Transcript sentiment under the reference additive scorer."""
    return lexicon.score(transcript.texts)


def _candidate_deltas(
    transcript: Transcript,
    lexicon: SentimentLexicon,
    antonyms: AntonymDictionary,
    scorer: Optional[Scorer],
) -> tuple[float, list[tuple[int, str, float]]]:
    """Base score plus (token index, antonym, signed single-substitution delta)."""
    score = scorer if scorer is not None else lexicon.score
    texts = transcript.texts
    base = score(texts)
    candidates = []
    for i, text in enumerate(texts):
        for alt in antonyms.antonyms(text):
            swapped = list(texts)
            swapped[i] = alt
            candidates.append((i, alt, score(swapped) - base))
    return base, candidates


def best_replacement(
    transcript: Transcript,
    token_index: int,
    lexicon: SentimentLexicon,
    antonyms: AntonymDictionary,
    scorer: Optional[Scorer] = None,
) -> Optional[tuple[str, float]]:
    """Best antonym for one token: maximal |sentiment change|.

    Returns (antonym, |delta|), or None when the token has no antonyms.
    Ties break lexicographically on the antonym string.
    """
    token = transcript.tokens[token_index]
    alts = antonyms.antonyms(token.text)
    if not alts:
        return None
    score = scorer if scorer is not None else lexicon.score
    texts = transcript.texts
    base = score(texts)
    best: tuple[float, str] | None = None
    for alt in alts:
        swapped = list(texts)
        swapped[token_index] = alt
        delta = abs(score(swapped) - base)
        if best is None or delta > best[0] or (delta == best[0] and alt < best[1]):
            best = (delta, alt)
    return best[1], best[0]


def plan(
    transcript: Transcript,
    lexicon: SentimentLexicon,
    antonyms: AntonymDictionary,
    scorer: Optional[Scorer] = None,
) -> ManipulationPlan:
    """Exhaustive search over replacement sets of size <= budget.

    Each candidate substitutes distinct tokens; a set's objective is the
    absolute sum of the per-substitution deltas (each measured with only
    that substitution applied).  Ties prefer fewer replacements, then
    earlier token indices, then lexicographic antonyms.  The empty plan
    wins when nothing changes the sentiment.
    """
    _, candidates = _candidate_deltas(transcript, lexicon, antonyms, scorer)

    best_key = None
    best_set: tuple[tuple[int, str, float], ...] = ()
    options: list[tuple[tuple[int, str, float], ...]] = [()]
    options += [(c,) for c in candidates]
    if transcript.budget >= 2:
        options += [
            (a, b)
            for a, b in itertools.combinations(candidates, 2)
            if a[0] != b[0]
        ]
    for combo in options:
        objective = abs(sum(c[2] for c in combo))
        ordered = tuple(sorted(combo, key=lambda c: (c[0], c[1])))
        key = (
            -objective,
            len(ordered),
            tuple(c[0] for c in ordered),
            tuple(c[1] for c in ordered),
        )
        if best_key is None or key < best_key:
            best_key = key
            best_set = ordered

    if not best_set or abs(sum(c[2] for c in best_set)) == 0.0:
        return ManipulationPlan((), 0.0, ())

    replacements = tuple(
        Replacement(i, transcript.tokens[i].text, alt, delta) for i, alt, delta in best_set
    )
    segments = tuple(
        Segment(transcript.tokens[r.token_index].start, transcript.tokens[r.token_index].end)
        for r in replacements
    )
    return ManipulationPlan(
        replacements, float(sum(r.delta_s for r in replacements)), segments
    )


VARIANT_FLAGS = ((1, 1), (0, 1), (1, 0))  # (eta_v, eta_a): both, audio-only, video-only
VARIANT_SUFFIXES = ("av", "a", "v")


def emit_variants(
    manipulation: ManipulationPlan, template: VideoAnnotation
) -> list[VideoAnnotation]:
    """The three fake variants sharing one plan's segments.

    Flag pairs are (1,1), (0,1), (1,0); the all-real pair is never emitted.
    Variant ids are the template id suffixed with -av / -a / -v.
    """
    if manipulation.is_empty:
        raise ValueError("cannot emit variants from an empty plan")
    out = []
    for (eta_v, eta_a), suffix in zip(VARIANT_FLAGS, VARIANT_SUFFIXES):
        out.append(
            replace(
                template,
                video_id=f"{template.video_id}-{suffix}",
                eta_v=eta_v,
                eta_a=eta_a,
                fake_segments=manipulation.fake_segments,
            )
        )
    return out


# ---------------------------------------------------------------------------
# JSON interchange.
# ---------------------------------------------------------------------------


def transcript_from_dict(rec: dict) -> Transcript:
    tokens = tuple(
        TranscriptToken(str(t["text"]), float(t["start"]), float(t["end"]))
        for t in rec["tokens"]
    )
    return Transcript(tokens, float(rec["duration"]))


def read_transcript(path: str | Path) -> Transcript:
    with open(path, "r", encoding="utf-8") as fh:
        return transcript_from_dict(json.load(fh))


def plan_to_dict(manipulation: ManipulationPlan) -> dict:
    return {
        "replacements": [
            {
                "token_index": r.token_index,
                "original": r.original,
                "replacement": r.replacement,
                "delta_s": r.delta_s,
            }
            for r in manipulation.replacements
        ],
        "total_delta": manipulation.total_delta,
        "fake_segments": [{"start": s.start, "end": s.end} for s in manipulation.fake_segments],
    }
