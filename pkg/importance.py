"""Per-token and per-answer contribution scores used by counterfactual samples.

Three backends share one interface: precomputed score files, an HTTP scoring
service, and an offline lexical-overlap heuristic."""
import logging
import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

from config import resource_path
from corpus_io import iter_jsonl
from errors import BackendError, DataError, UsageError
from lexicon import read_word_list, token_core
from services import post_json
from triplet_builder import MASK_TOKEN, sentence_spans

logger = logging.getLogger(__name__)

MULTIPLICITY_WEIGHT = 0.01
IDF_WEIGHT = 0.5


@dataclass(frozen=True)
class ImportanceScores:
    question_scores: Tuple[float, ...]
    description_scores: Tuple[float, ...]
    answer_scores: Dict[str, float] = field(default_factory=dict, hash=False)

    def validate(self, question_length: int, description_length: int, source: str = "") -> None:
        if len(self.question_scores) != question_length:
            raise DataError(f"{source}: {len(self.question_scores)} question scores for {question_length} tokens")
        if len(self.description_scores) != description_length:
            raise DataError(f"{source}: {len(self.description_scores)} description scores "
                            f"for {description_length} tokens")
        for value in (*self.question_scores, *self.description_scores):
            if not math.isfinite(value) or value < 0:
                raise DataError(f"{source}: token scores must be finite and non-negative, got {value}")
        for answer, value in self.answer_scores.items():
            if not math.isfinite(value):
                raise DataError(f"{source}: answer score for '{answer}' is not finite")


def parse_score_record(record: Dict, source: str) -> ImportanceScores:
    """Build scores from a ``{question_scores, description_scores, answer_scores}`` object"""
    try:
        question_scores = tuple(float(v) for v in record["question_scores"])
        description_scores = tuple(float(v) for v in record["description_scores"])
        answer_scores = {str(k): float(v) for k, v in (record.get("answer_scores") or {}).items()}
    except KeyError as e:
        raise DataError(f"{source}: score record missing field {e}")
    except (TypeError, ValueError, AttributeError) as e:
        raise DataError(f"{source}: malformed score record ({e})")
    scores = ImportanceScores(question_scores, description_scores, answer_scores)
    scores.validate(len(question_scores), len(description_scores), source)
    return scores


class Scorer:
    name = ""

    def score(self, question: Sequence[str], description: Sequence[str], question_id,
              answers: Sequence[str] = ()) -> ImportanceScores:
        raise NotImplementedError


class FileScorer(Scorer):
    """Scores computed once per corpus and read by question_id"""
    name = "file"

    def __init__(self, path: str):
        self.path = path
        self.records: Dict[str, ImportanceScores] = {}
        for record in iter_jsonl(path):
            if "question_id" not in record:
                raise DataError(f"{path}: score record without question_id")
            key = str(record["question_id"])
            self.records[key] = parse_score_record(record, f"{path} (question_id {key})")
        logger.info(f"Loaded importance scores for {len(self.records)} questions from {path}")

    def score(self, question, description, question_id, answers=()):
        scores = self.records.get(str(question_id))
        if scores is None:
            raise DataError(f"{self.path}: no importance scores for question_id {question_id}")
        scores.validate(len(question), len(description), f"{self.path} (question_id {question_id})")
        return scores


class ServiceScorer(Scorer):
    """POST /v1/importance with at most ``concurrency`` requests in flight"""
    name = "service"

    def __init__(self, endpoint: Optional[str], concurrency: int = 4, timeout: float = 30.0, max_retries: int = 3):
        if not endpoint:
            raise BackendError("Scoring service endpoint is not configured")
        self.url = endpoint.rstrip("/") + "/v1/importance"
        self.timeout = timeout
        self.max_retries = max_retries
        self._slots = threading.BoundedSemaphore(max(1, concurrency))

    def score(self, question, description, question_id, answers=()):
        payload = {
            "question_id": question_id,
            "question": " ".join(question),
            "description": " ".join(description),
            "answers": list(answers),
        }
        with self._slots:
            body = post_json(self.url, payload, self.timeout, self.max_retries)
        try:
            scores = parse_score_record(body, f"{self.url} (question_id {question_id})")
            scores.validate(len(question), len(description), f"{self.url} (question_id {question_id})")
        except DataError as e:
            raise BackendError(str(e))
        return scores


class LexicalOverlapScorer(Scorer):
    """Offline scores from answer overlap and within-sample inverse document frequency

    A token scores 1 when it matches an answer token, plus half its normalized
    IDF over the question and the description sentences; stop-listed tokens
    and masks score 0. An answer scores the share of its tokens still visible
    in the input plus a small multiplicity bonus."""
    name = "lexical_overlap"

    def __init__(self, stopwords: Sequence[str]):
        self.stopwords = frozenset(word.lower() for word in stopwords)

    def _idf(self, question: Sequence[str], description: Sequence[str]) -> Dict[str, float]:
        documents = [{token_core(t) for t in question}]
        documents += [{token_core(t) for t in description[start:end]} for start, end in sentence_spans(description)]
        frequency = Counter(core for document in documents for core in document)
        idf = {core: math.log((len(documents) + 1) / (count + 1)) + 1.0 for core, count in frequency.items()}
        peak = max(idf.values(), default=1.0)
        return {core: value / peak for core, value in idf.items()}

    def _token_scores(self, tokens: Sequence[str], answer_tokens: frozenset, idf: Dict[str, float]) -> Tuple[float, ...]:
        scores = []
        for token in tokens:
            core = token_core(token)
            if token == MASK_TOKEN or not core or core in self.stopwords:
                scores.append(0.0)
                continue
            scores.append((1.0 if core in answer_tokens else 0.0) + IDF_WEIGHT * idf.get(core, 0.0))
        return tuple(scores)

    def score(self, question, description, question_id, answers=()):
        answer_tokens = frozenset(token_core(t) for answer in answers for t in answer.split() if token_core(t))
        idf = self._idf(question, description)
        visible = {token_core(t) for t in (*question, *description) if t != MASK_TOKEN}
        multiplicity = Counter(answers)
        answer_scores = {}
        for answer, count in multiplicity.items():
            cores = [token_core(t) for t in answer.split() if token_core(t)]
            coverage = sum(core in visible for core in cores) / len(cores) if cores else 0.0
            answer_scores[answer] = coverage + MULTIPLICITY_WEIGHT * count
        return ImportanceScores(
            self._token_scores(question, answer_tokens, idf),
            self._token_scores(description, answer_tokens, idf),
            answer_scores,
        )


def score(question: Sequence[str], description: Sequence[str], question_id, backend: Scorer,
          answers: Sequence[str] = ()) -> ImportanceScores:
    return backend.score(question, description, question_id, answers)


def top_answers(question: Sequence[str], description: Sequence[str], top_j: int, backend: Scorer,
                answers: Sequence[str], question_id=None) -> Tuple[str, ...]:
    """The ``top_j`` highest-scoring distinct answers of the sample

    One of ``question``/``description`` is the partially masked input. Equal
    scores are ordered lexicographically; unscored answers are not candidates."""
    if top_j <= 0:
        return ()
    answer_scores = backend.score(question, description, question_id, answers).answer_scores
    candidates = [answer for answer in set(answers) if answer in answer_scores]
    candidates.sort(key=lambda answer: (-answer_scores[answer], answer))
    return tuple(candidates[:top_j])


def make_scorer(settings, stopwords_path: Optional[str] = None) -> Scorer:
    if settings.kind == "file":
        if not settings.path:
            raise DataError("scorer.path is required for the file backend")
        return FileScorer(settings.path)
    if settings.kind == "service":
        return ServiceScorer(settings.endpoint, settings.concurrency, settings.timeout, settings.max_retries)
    if settings.kind == "lexical_overlap":
        return LexicalOverlapScorer(read_word_list(stopwords_path or resource_path("stopwords.txt")))
    raise UsageError(f"Unknown scorer backend '{settings.kind}'")
