"""Readers and writers for the source corpora: VQA questions/annotations,
COCO captions and Localized Narratives, plus the join into raw samples."""
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from tqdm import tqdm

from errors import DataError, Diagnostics

logger = logging.getLogger(__name__)

ANSWER_TYPES = ("yes/no", "number", "other")
ANSWERS_PER_QUESTION = 10


@dataclass(frozen=True)
class QuestionRecord:
    question_id: int
    image_id: int
    text: str


@dataclass(frozen=True)
class AnnotationRecord:
    question_id: int
    image_id: int
    question_type: str
    answer_type: str
    # (answer, answer_confidence) in answer_id order
    answers: Tuple[Tuple[str, str], ...]
    multiple_choice_answer: str = ""

    def answer_strings(self) -> Tuple[str, ...]:
        return tuple(answer for answer, _ in self.answers)


@dataclass(frozen=True)
class CaptionRecord:
    image_id: int
    caption_id: int
    text: str


@dataclass(frozen=True)
class NarrativeRecord:
    image_id: int
    text: str


@dataclass(frozen=True)
class RawSample:
    question_id: int
    image_id: int
    question: str
    question_type: str
    answer_type: str
    answers: Tuple[str, ...]
    captions: Tuple[str, ...]
    narrative: str
    incomplete: bool = False


def word_count(text: str) -> int:
    """Whitespace word count after trimming; punctuation stays attached"""
    return len(text.strip().split())


def mean_word_count(texts: Iterable[str]) -> float:
    counts = [word_count(text) for text in texts]
    return sum(counts) / len(counts) if counts else 0.0


# ========== LINE-DELIMITED RECORDS ========== #

def iter_jsonl(path: str, diagnostics: Optional[Diagnostics] = None,
               category: str = "malformed_line") -> Iterator[Dict[str, Any]]:
    """Yield one object per non-blank line; malformed lines are skipped and counted"""
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                if diagnostics is None:
                    raise DataError(f"{path}:{line_no}: invalid JSON ({e})")
                diagnostics.add(category, f"{path}:{line_no}: {e}")
                continue
            if not isinstance(record, dict):
                if diagnostics is None:
                    raise DataError(f"{path}:{line_no}: expected an object")
                diagnostics.add(category, f"{path}:{line_no}: not an object")
                continue
            yield record


def write_jsonl(path: str, records: Iterable[Dict[str, Any]]) -> int:
    """Write records atomically (temp file + rename); returns the record count"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    count = 0
    with open(tmp_path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            f.write("\n")
            count += 1
    os.replace(tmp_path, path)
    return count


def _load_json(path: str) -> Any:
    if not os.path.exists(path):
        raise DataError(f"File not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Could not read {path}: {e}")


def _top_level_list(data: Any, key: str, path: str) -> List[Dict[str, Any]]:
    if not isinstance(data, dict) or key not in data:
        raise DataError(f"{path}: expected a top-level object with '{key}'")
    items = data[key]
    if not isinstance(items, list):
        raise DataError(f"{path}: '{key}' must be an array")
    return items


def _require(record: Any, fields: Sequence[str], index: int, path: str) -> None:
    if not isinstance(record, dict):
        raise DataError(f"{path}: record {index} is not an object")
    for name in fields:
        if name not in record:
            raise DataError(f"{path}: record {index} is missing required field '{name}'")


def _as_int(value: Any, name: str, index: int, path: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise DataError(f"{path}: record {index} has a non-integer {name} {value!r}")


# ========== QUESTIONS ========== #

def load_questions(path: str, diagnostics: Optional[Diagnostics] = None) -> List[QuestionRecord]:
    """Load a VQA v2 questions file"""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    items = _top_level_list(_load_json(path), "questions", path)
    records = []
    seen = set()
    for index, item in enumerate(tqdm(items, desc="Loading questions", disable=len(items) < 10000)):
        _require(item, ("question_id", "image_id", "question"), index, path)
        text = str(item["question"]).strip()
        question_id = _as_int(item["question_id"], "question_id", index, path)
        if not text:
            diagnostics.add("empty_question", f"record {index} (question_id {question_id})")
            continue
        if question_id in seen:
            diagnostics.add("duplicate_question_id", f"record {index} (question_id {question_id})")
            continue
        seen.add(question_id)
        records.append(QuestionRecord(question_id, _as_int(item["image_id"], "image_id", index, path), text))
    logger.info(f"Loaded {len(records)} questions from {path}")
    return records


def dump_questions(records: Sequence[QuestionRecord]) -> Dict[str, Any]:
    return {
        "questions": [
            {"question_id": r.question_id, "image_id": r.image_id, "question": r.text}
            for r in records
        ]
    }


# ========== ANNOTATIONS ========== #

def load_annotations(path: str, diagnostics: Optional[Diagnostics] = None) -> List[AnnotationRecord]:
    """Load a VQA v2 annotations file; records without exactly 10 answers are rejected"""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    items = _top_level_list(_load_json(path), "annotations", path)
    records = []
    for index, item in enumerate(tqdm(items, desc="Loading annotations", disable=len(items) < 10000)):
        _require(item, ("question_id", "image_id", "question_type", "answer_type", "answers"), index, path)
        question_id = _as_int(item["question_id"], "question_id", index, path)
        answer_type = str(item["answer_type"]).strip().lower()
        if answer_type not in ANSWER_TYPES:
            diagnostics.add("bad_answer_type", f"question_id {question_id}: '{answer_type}'")
            continue
        raw_answers = item["answers"]
        if not isinstance(raw_answers, list) or len(raw_answers) != ANSWERS_PER_QUESTION:
            size = len(raw_answers) if isinstance(raw_answers, list) else "n/a"
            diagnostics.add("wrong_answer_count", f"question_id {question_id}: {size} answers")
            continue
        answers = []
        for position, answer in enumerate(raw_answers):
            _require(answer, ("answer",), index, path)
            answer_id = answer.get("answer_id", position + 1)
            answers.append((
                _as_int(answer_id, "answer_id", index, path),
                str(answer["answer"]),
                str(answer.get("answer_confidence", "yes")),
            ))
        answers.sort(key=lambda entry: entry[0])
        records.append(AnnotationRecord(
            question_id=question_id,
            image_id=_as_int(item["image_id"], "image_id", index, path),
            question_type=str(item["question_type"]),
            answer_type=answer_type,
            answers=tuple((text, confidence) for _, text, confidence in answers),
            multiple_choice_answer=str(item.get("multiple_choice_answer", "")),
        ))
    logger.info(f"Loaded {len(records)} annotations from {path}")
    return records


def dump_annotations(records: Sequence[AnnotationRecord]) -> Dict[str, Any]:
    return {
        "annotations": [
            {
                "question_id": r.question_id,
                "image_id": r.image_id,
                "question_type": r.question_type,
                "answer_type": r.answer_type,
                "multiple_choice_answer": r.multiple_choice_answer,
                "answers": [
                    {"answer": answer, "answer_confidence": confidence, "answer_id": position + 1}
                    for position, (answer, confidence) in enumerate(r.answers)
                ],
            }
            for r in records
        ]
    }


# ========== CAPTIONS ========== #

def load_caption_records(path: str, diagnostics: Optional[Diagnostics] = None) -> List[CaptionRecord]:
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    items = _top_level_list(_load_json(path), "annotations", path)
    records = []
    for index, item in enumerate(items):
        _require(item, ("image_id", "id", "caption"), index, path)
        text = " ".join(str(item["caption"]).split())
        if not text:
            diagnostics.add("empty_caption", f"caption id {item['id']}")
            continue
        records.append(CaptionRecord(
            _as_int(item["image_id"], "image_id", index, path), _as_int(item["id"], "id", index, path), text,
        ))
    return records


def load_captions(paths: Any, diagnostics: Optional[Diagnostics] = None) -> Dict[int, List[str]]:
    """Group COCO captions by image, ordered by caption_id ascending"""
    if isinstance(paths, str):
        paths = [paths]
    by_image: Dict[int, List[Tuple[int, str]]] = {}
    for path in paths:
        for record in load_caption_records(path, diagnostics):
            by_image.setdefault(record.image_id, []).append((record.caption_id, record.text))
    captions = {
        image_id: [text for _, text in sorted(entries)]
        for image_id, entries in sorted(by_image.items())
    }
    logger.info(f"Loaded captions for {len(captions)} images")
    return captions


def dump_captions(records: Sequence[CaptionRecord]) -> Dict[str, Any]:
    return {
        "annotations": [
            {"image_id": r.image_id, "id": r.caption_id, "caption": r.text}
            for r in records
        ]
    }


# ========== NARRATIVES ========== #

def iter_narrative_records(path: str, diagnostics: Optional[Diagnostics] = None) -> Iterator[NarrativeRecord]:
    """Narratives of one Localized Narratives line file, in file order"""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    if not os.path.exists(path):
        raise DataError(f"File not found: {path}")
    for record in iter_jsonl(path, diagnostics, category="malformed_narrative"):
        if "image_id" not in record or "caption" not in record:
            diagnostics.add("malformed_narrative", f"{path}: record without image_id/caption")
            continue
        try:
            image_id = int(str(record["image_id"]).strip())
        except ValueError:
            diagnostics.add("malformed_narrative", f"{path}: image_id {record['image_id']!r}")
            continue
        text = " ".join(str(record["caption"]).split())
        if not text:
            diagnostics.add("malformed_narrative", f"{path}: empty narrative for image {image_id}")
            continue
        yield NarrativeRecord(image_id, text)


def dump_narratives(records: Iterable[NarrativeRecord]) -> List[Dict[str, Any]]:
    """Line records in the Localized Narratives schema, for :func:`write_jsonl`"""
    return [{"image_id": str(r.image_id), "caption": r.text} for r in records]


def load_narratives(paths: Any, diagnostics: Optional[Diagnostics] = None) -> Dict[int, str]:
    """Load Localized Narratives line files; the first narrative per image wins"""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    if isinstance(paths, str):
        paths = [paths]
    narratives: Dict[int, str] = {}
    for path in paths:
        for record in iter_narrative_records(path, diagnostics):
            if record.image_id in narratives:
                diagnostics.add("duplicate_narrative", f"image {record.image_id}")
                continue
            narratives[record.image_id] = record.text
    logger.info(f"Loaded {len(narratives)} narratives")
    return narratives


# ========== JOIN ========== #

def join(questions: Sequence[QuestionRecord],
         annotations: Sequence[AnnotationRecord],
         captions: Dict[int, List[str]],
         narratives: Dict[int, str],
         diagnostics: Optional[Diagnostics] = None,
         require_narrative: bool = True) -> List[RawSample]:
    """Join the four corpora by question_id / image_id

    Each excluded question is reported exactly once, under the first missing
    piece in the order annotation, captions, narrative."""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    by_question = {a.question_id: a for a in annotations}
    samples = []
    for question in questions:
        annotation = by_question.get(question.question_id)
        if annotation is None:
            diagnostics.add("missing_annotation", f"question_id {question.question_id}")
            continue
        image_captions = captions.get(question.image_id)
        if not image_captions:
            diagnostics.add("missing_captions", f"question_id {question.question_id} (image {question.image_id})")
            continue
        narrative = narratives.get(question.image_id, "")
        if not narrative and require_narrative:
            diagnostics.add("missing_narrative", f"question_id {question.question_id} (image {question.image_id})")
            continue
        samples.append(RawSample(
            question_id=question.question_id,
            image_id=question.image_id,
            question=question.text,
            question_type=annotation.question_type,
            answer_type=annotation.answer_type,
            answers=annotation.answer_strings(),
            captions=tuple(image_captions),
            narrative=narrative,
            incomplete=not narrative,
        ))
    logger.info(f"Joined {len(samples)} of {len(questions)} questions")
    return samples
