"""Training triplets (question, description, answers): description modes,
model input sequences, the truncation protocol and triplet files."""
import hashlib
import logging
import math
import random
import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from corpus_io import RawSample, iter_jsonl, mean_word_count, write_jsonl
from errors import DataError, Diagnostics, UsageError

logger = logging.getLogger(__name__)

CLS_TOKEN = "<s>"
SEP_TOKEN = "</s>"
MASK_TOKEN = "<mask>"
ORIGINAL = "original"
MAX_CAPTIONS = 5
SENTENCE_END = re.compile(r"[.!?][\"')\]]*$")

MASK64 = (1 << 64) - 1

QuestionId = Union[int, str]


# ========== SEEDING ========== #

def splitmix64(value: int) -> int:
    value = (value + 0x9E3779B97F4A7C15) & MASK64
    value = ((value ^ (value >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    value = ((value ^ (value >> 27)) * 0x94D049BB133111EB) & MASK64
    return value ^ (value >> 31)


def _key_bits(key: QuestionId, salt: str) -> int:
    if isinstance(key, int) and not salt:
        return key & MASK64
    digest = hashlib.blake2b(f"{salt}\x1f{key}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def sample_seed(global_seed: int, key: QuestionId, salt: str = "") -> int:
    """Per-sample seed: splitmix64(global_seed * golden ratio + key bits)"""
    mixed = (int(global_seed) * 0x9E3779B97F4A7C15 + _key_bits(key, salt)) & MASK64
    return splitmix64(mixed)


def sample_rng(global_seed: int, key: QuestionId, salt: str = "") -> random.Random:
    return random.Random(sample_seed(global_seed, key, salt))


# ========== TYPES ========== #

@dataclass(frozen=True)
class DescriptionMode:
    kind: str
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("captions", "narrative", "whole", "none"):
            raise UsageError(f"Unknown description mode '{self.kind}'")
        if self.kind == "captions" and not 1 <= self.k <= MAX_CAPTIONS:
            raise UsageError(f"captions(k) needs 1 <= k <= {MAX_CAPTIONS}, got {self.k}")

    @classmethod
    def parse(cls, text: str) -> "DescriptionMode":
        """``whole``, ``narrative``, ``none`` or ``captions:k``"""
        text = text.strip().lower()
        if text.startswith("captions"):
            _, _, k = text.partition(":")
            try:
                return cls("captions", int(k or MAX_CAPTIONS))
            except ValueError:
                raise UsageError(f"Bad caption count in mode '{text}'")
        return cls(text)

    def label(self) -> str:
        if self.kind == "captions":
            return f"{self.k} Caption{'s' if self.k > 1 else ''}"
        return {"none": "None (Question-Only)", "narrative": "Narrative",
                "whole": "Whole (Narrative + 5 Captions)"}[self.kind]

    def __str__(self) -> str:
        return f"captions:{self.k}" if self.kind == "captions" else self.kind


@dataclass(frozen=True)
class Triplet:
    question_id: QuestionId
    question: Tuple[str, ...]
    description: Tuple[str, ...]
    answers: Tuple[str, ...]
    question_type: str
    answer_type: str
    origin: str = ORIGINAL
    parent_question_id: Optional[QuestionId] = None

    def __post_init__(self):
        if not self.question:
            raise DataError(f"Triplet {self.question_id} has an empty question")
        if self.parent_question_id is None:
            object.__setattr__(self, "parent_question_id", self.question_id)

    def derive(self, origin: str, suffix: str = "", **changes: Any) -> "Triplet":
        """Synthetic child carrying provenance back to this triplet"""
        question_id = f"{self.parent_question_id}-{origin}" + (f"-{suffix}" if suffix else "")
        values = dict(
            question_id=question_id, question=self.question, description=self.description,
            answers=self.answers, question_type=self.question_type, answer_type=self.answer_type,
            origin=origin, parent_question_id=self.parent_question_id,
        )
        values.update(changes)
        return Triplet(**values)

    def sequence(self) -> str:
        return assemble_sequence(self.question, self.description)

    def to_record(self) -> Dict[str, Any]:
        return {
            "question_id": self.question_id,
            "parent_question_id": self.parent_question_id,
            "question": " ".join(self.question),
            "description": " ".join(self.description),
            "answers": list(self.answers),
            "question_type": self.question_type,
            "answer_type": self.answer_type,
            "origin": self.origin,
            "sequence": self.sequence(),
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "Triplet":
        try:
            return cls(
                question_id=record["question_id"],
                question=tuple(record["question"].split()),
                description=tuple(record["description"].split()),
                answers=tuple(record["answers"]),
                question_type=record["question_type"],
                answer_type=record["answer_type"],
                origin=record.get("origin", ORIGINAL),
                parent_question_id=record.get("parent_question_id"),
            )
        except KeyError as e:
            raise DataError(f"Triplet record missing field {e}")


# ========== DESCRIPTIONS ========== #

def tokenize(text: str) -> List[str]:
    return text.split()


def build_description(sample: RawSample, mode: DescriptionMode, seed: int,
                      diagnostics: Optional[Diagnostics] = None) -> List[str]:
    """Description tokens for a sample under the given mode"""
    if mode.kind == "none":
        return []
    if mode.kind in ("narrative", "whole") and not sample.narrative and diagnostics is not None:
        diagnostics.add("missing_narrative", f"question_id {sample.question_id}")
    if mode.kind == "narrative":
        return tokenize(sample.narrative)
    if mode.kind == "whole":
        parts = [sample.narrative] + list(sample.captions[:MAX_CAPTIONS])
        return tokenize(" ".join(part for part in parts if part))
    captions = list(sample.captions)
    if len(captions) < mode.k:
        if diagnostics is not None:
            diagnostics.add("too_few_captions", f"question_id {sample.question_id}: {len(captions)} < {mode.k}")
        chosen = range(len(captions))
    else:
        chosen = sorted(random.Random(seed).sample(range(len(captions)), mode.k))
    return tokenize(" ".join(captions[i] for i in chosen))


def assemble_sequence(question: Sequence[str], description: Sequence[str]) -> str:
    """``<s> q </s> </s> d </s>``"""
    return " ".join([CLS_TOKEN, *question, SEP_TOKEN, SEP_TOKEN, *description, SEP_TOKEN])


# ========== TRUNCATION ========== #

def sentence_spans(tokens: Sequence[str]) -> List[Tuple[int, int]]:
    """[start, end) spans; a sentence ends at a token ending in . ! or ?"""
    spans = []
    start = 0
    for i, token in enumerate(tokens):
        if SENTENCE_END.search(token):
            spans.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        spans.append((start, len(tokens)))
    return spans


def removal_count(rate: float, length: int) -> int:
    if not 0 <= rate <= 1:
        raise UsageError(f"Truncation rate must be within [0, 1], got {rate}")
    return int(math.floor(Decimal(str(rate)) * length))


def truncate_description(tokens: Sequence[str], rate: float, seed: int) -> List[str]:
    """Shuffle sentences, drop words from the end of the shuffled sequence,
    then restore the original sentence order"""
    to_remove = removal_count(rate, len(tokens))
    if to_remove == 0:
        return list(tokens)
    spans = sentence_spans(tokens)
    order = list(range(len(spans)))
    random.Random(seed).shuffle(order)
    keep = [end - start for start, end in spans]
    for index in reversed(order):
        if to_remove == 0:
            break
        dropped = min(keep[index], to_remove)
        keep[index] -= dropped
        to_remove -= dropped
    truncated = []
    for (start, _), kept in zip(spans, keep):
        truncated.extend(tokens[start:start + kept])
    return truncated


# ========== BATCH ========== #

def make_triplet(sample: RawSample, mode: DescriptionMode, seed: int,
                 diagnostics: Optional[Diagnostics] = None) -> Triplet:
    description = build_description(sample, mode, sample_seed(seed, sample.question_id), diagnostics)
    return Triplet(
        question_id=sample.question_id,
        question=tuple(tokenize(sample.question)),
        description=tuple(description),
        answers=tuple(sample.answers),
        question_type=sample.question_type,
        answer_type=sample.answer_type,
    )


def make_triplets(samples: Iterable[RawSample], mode: DescriptionMode, seed: int,
                  diagnostics: Optional[Diagnostics] = None) -> List[Triplet]:
    triplets = [make_triplet(sample, mode, seed, diagnostics) for sample in samples]
    return sorted(triplets, key=canonical_key)


ORIGIN_ORDER = {ORIGINAL: 0}


def canonical_key(triplet: Triplet) -> Tuple[Any, ...]:
    """Merge order: parent id, originals first, then origin and id"""
    parent = triplet.parent_question_id
    parent_key = (0, parent, "") if isinstance(parent, int) else (1, 0, str(parent))
    return (parent_key, ORIGIN_ORDER.get(triplet.origin, 1), triplet.origin, str(triplet.question_id))


def write_triplets(path: str, triplets: Iterable[Triplet], header: Dict[str, Any]) -> int:
    """Header record first, then triplets in canonical order"""
    ordered = sorted(triplets, key=canonical_key)
    records = [{"_header": header}] + [t.to_record() for t in ordered]
    return write_jsonl(path, records) - 1


def read_triplets(path: str, diagnostics: Optional[Diagnostics] = None) -> List[Triplet]:
    triplets = []
    for record in iter_jsonl(path, diagnostics):
        if "_header" in record:
            continue
        triplets.append(Triplet.from_record(record))
    logger.info(f"Read {len(triplets)} triplets from {path}")
    return triplets


def read_header(path: str) -> Dict[str, Any]:
    for record in iter_jsonl(path):
        return record.get("_header", {})
    return {}


def description_length_stats(samples: Sequence[RawSample], modes: Sequence[DescriptionMode],
                             seed: int) -> List[Dict[str, Any]]:
    """Mean description length per mode, one row per mode"""
    rows = []
    for mode in modes:
        texts = [" ".join(build_description(s, mode, sample_seed(seed, s.question_id))) for s in samples]
        rows.append({
            "Image Description": mode.label(), "Mode": str(mode),
            "Length": round(mean_word_count(texts), 1), "Samples": len(texts),
        })
    return rows
