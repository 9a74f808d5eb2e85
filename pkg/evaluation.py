"""VQA accuracy with the standard leave-one-out protocol, per answer-type
breakdowns, and the answer-overlap comparison of two systems."""
import json
import logging
import os
import re
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

from corpus_io import ANSWERS_PER_QUESTION, AnnotationRecord, iter_jsonl
from errors import DataError, Diagnostics

logger = logging.getLogger(__name__)

QuestionId = Union[int, str]

CATEGORIES = {"yes/no": "yes_no", "number": "number", "other": "other"}

CONTRACTIONS = {
    "aint": "ain't", "arent": "aren't", "cant": "can't", "couldve": "could've", "couldnt": "couldn't",
    "couldn'tve": "couldn't've", "couldnt've": "couldn't've", "didnt": "didn't", "doesnt": "doesn't",
    "dont": "don't", "hadnt": "hadn't", "hadnt've": "hadn't've", "hadn'tve": "hadn't've", "hasnt": "hasn't",
    "havent": "haven't", "hed": "he'd", "hed've": "he'd've", "he'dve": "he'd've", "hes": "he's",
    "howd": "how'd", "howll": "how'll", "hows": "how's", "Id've": "I'd've", "I'dve": "I'd've", "Im": "I'm",
    "Ive": "I've", "isnt": "isn't", "itd": "it'd", "itd've": "it'd've", "it'dve": "it'd've", "itll": "it'll",
    "let's": "let's", "maam": "ma'am", "mightnt": "mightn't", "mightnt've": "mightn't've",
    "mightn'tve": "mightn't've", "mightve": "might've", "mustnt": "mustn't", "mustve": "must've",
    "neednt": "needn't", "notve": "not've", "oclock": "o'clock", "oughtnt": "oughtn't",
    "ow's'at": "'ow's'at", "'ows'at": "'ow's'at", "'ow'sat": "'ow's'at", "shant": "shan't",
    "shed've": "she'd've", "she'dve": "she'd've", "she's": "she's", "shouldve": "should've",
    "shouldnt": "shouldn't", "shouldnt've": "shouldn't've", "shouldn'tve": "shouldn't've",
    "somebody'd": "somebodyd", "somebodyd've": "somebody'd've", "somebody'dve": "somebody'd've",
    "somebodyll": "somebody'll", "somebodys": "somebody's", "someoned": "someone'd",
    "someoned've": "someone'd've", "someone'dve": "someone'd've", "someonell": "someone'll",
    "someones": "someone's", "somethingd": "something'd", "somethingd've": "something'd've",
    "something'dve": "something'd've", "somethingll": "something'll", "thats": "that's",
    "thered": "there'd", "thered've": "there'd've", "there'dve": "there'd've", "therere": "there're",
    "theres": "there's", "theyd": "they'd", "theyd've": "they'd've", "they'dve": "they'd've",
    "theyll": "they'll", "theyre": "they're", "theyve": "they've", "twas": "'twas", "wasnt": "wasn't",
    "wed've": "we'd've", "we'dve": "we'd've", "weve": "we've", "werent": "weren't", "whatll": "what'll",
    "whatre": "what're", "whats": "what's", "whatve": "what've", "whens": "when's", "whered": "where'd",
    "wheres": "where's", "whereve": "where've", "whod": "who'd", "whod've": "who'd've",
    "who'dve": "who'd've", "wholl": "who'll", "whos": "who's", "whove": "who've", "whyll": "why'll",
    "whyre": "why're", "whys": "why's", "wont": "won't", "wouldve": "would've", "wouldnt": "wouldn't",
    "wouldnt've": "wouldn't've", "wouldn'tve": "wouldn't've", "yall": "y'all", "yall'll": "y'all'll",
    "y'allll": "y'all'll", "yall'd've": "y'all'd've", "y'alld've": "y'all'd've", "y'all'dve": "y'all'd've",
    "youd": "you'd", "youd've": "you'd've", "you'dve": "you'd've", "youll": "you'll", "youre": "you're",
    "youve": "you've",
}
NUMBER_WORDS = {
    "none": "0", "zero": "0", "one": "1", "two": "2", "three": "3", "four": "4", "five": "5",
    "six": "6", "seven": "7", "eight": "8", "nine": "9", "ten": "10",
}
ARTICLES = ("a", "an", "the")
PUNCTUATION = (";", r"/", "[", "]", '"', "{", "}", "(", ")", "=", "+", "\\", "_", "-",
               ">", "<", "@", "`", ",", "?", "!")
PERIOD_STRIP = re.compile(r"(?!<=\d)(\.)(?!\d)")
COMMA_STRIP = re.compile(r"(\d)(,)(\d)")


# ========== NORMALIZATION ========== #

def _strip_punctuation(text: str) -> str:
    result = text
    for p in PUNCTUATION:
        if (p + " " in text or " " + p in text) or COMMA_STRIP.search(text) is not None:
            result = result.replace(p, "")
        else:
            result = result.replace(p, " ")
    return PERIOD_STRIP.sub("", result)


def _digits_and_articles(text: str) -> str:
    words = [NUMBER_WORDS.get(word, word) for word in text.lower().split()]
    words = [word for word in words if word not in ARTICLES]
    return " ".join(CONTRACTIONS.get(word, word) for word in words)


def normalize_answer(text: str, official: bool = False) -> str:
    """Lowercase, trim and collapse spaces; ``official`` adds the standard
    punctuation, number-word, article and contraction rules"""
    text = " ".join(text.replace("\n", " ").replace("\t", " ").split())
    if official:
        text = _digits_and_articles(_strip_punctuation(text))
    return " ".join(text.lower().split())


# ========== ACCURACY ========== #

def vqa_accuracy(prediction: str, answers: Sequence[str], official: bool = False) -> float:
    """Mean over the 10 leave-one-out subsets of min(matches / 3, 1)"""
    if len(answers) != ANSWERS_PER_QUESTION:
        raise DataError(f"VQA accuracy needs {ANSWERS_PER_QUESTION} answers, got {len(answers)}")
    predicted = normalize_answer(prediction, official)
    matches = [normalize_answer(answer, official) == predicted for answer in answers]
    subsets = list(combinations(range(len(answers)), len(answers) - 1))
    return sum(min(sum(matches[i] for i in subset) / 3, 1.0) for subset in subsets) / len(subsets)


def closed_form_accuracy(k: int, total: int = ANSWERS_PER_QUESTION) -> float:
    return (k * min((k - 1) / 3, 1.0) + (total - k) * min(k / 3, 1.0)) / total


# ========== PREDICTIONS ========== #

@dataclass(frozen=True)
class PredictionRecord:
    question_id: QuestionId
    answer: str


def _question_id(value: Any) -> QuestionId:
    try:
        return int(value)
    except (TypeError, ValueError):
        return str(value)


def load_predictions(path: str) -> Dict[QuestionId, str]:
    """Read ``{question_id, answer}`` records as JSON lines or a JSON array"""
    if not os.path.exists(path):
        raise DataError(f"Prediction file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        head = f.read(1024).lstrip()
    if head.startswith("["):
        try:
            with open(path, "r", encoding="utf-8") as f:
                items = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON ({e})")
    else:
        items = list(iter_jsonl(path))
    predictions: Dict[QuestionId, str] = {}
    for index, item in enumerate(items):
        if not isinstance(item, dict) or "question_id" not in item or "answer" not in item:
            raise DataError(f"{path}: record {index} needs 'question_id' and 'answer'")
        record = PredictionRecord(_question_id(item["question_id"]), str(item["answer"]))
        if record.question_id in predictions:
            raise DataError(f"{path}: duplicate prediction for question_id {record.question_id}")
        predictions[record.question_id] = record.answer
    logger.info(f"Loaded {len(predictions)} predictions from {path}")
    return predictions


# ========== REPORTS ========== #

@dataclass
class AccuracyReport:
    overall: float
    yes_no: Optional[float] = None
    number: Optional[float] = None
    other: Optional[float] = None
    counts: Dict[str, int] = field(default_factory=dict)
    per_question_type: Dict[str, float] = field(default_factory=dict)
    per_question: Dict[str, float] = field(default_factory=dict)
    missing_predictions: int = 0
    gap: Optional[float] = None

    def with_gap(self, baseline: "AccuracyReport") -> "AccuracyReport":
        self.gap = accuracy_gap(self, baseline)
        return self

    def to_record(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "AccuracyReport":
        try:
            return cls(**record)
        except TypeError as e:
            raise DataError(f"Malformed accuracy report: {e}")


def accuracy_gap(report: AccuracyReport, baseline: AccuracyReport) -> float:
    return round(report.overall - baseline.overall, 2)


def save_report(path: str, report: Any) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_record(), f, indent=2, sort_keys=True, ensure_ascii=False)


def load_report(path: str) -> AccuracyReport:
    if not os.path.exists(path):
        raise DataError(f"Report not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return AccuracyReport.from_record(json.load(f))


def _percent(values: List[float]) -> Optional[float]:
    return round(100 * sum(values) / len(values), 2) if values else None


def evaluate(predictions: Mapping[QuestionId, str], annotations: Sequence[AnnotationRecord],
             official: bool = True, diagnostics: Optional[Diagnostics] = None) -> AccuracyReport:
    """Score every annotated question; unanswered questions count as 0"""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    by_question = {a.question_id: a for a in annotations}
    unknown = [qid for qid in predictions if qid not in by_question]
    if unknown:
        listed = ", ".join(str(qid) for qid in sorted(unknown, key=str)[:10])
        raise DataError(f"{len(unknown)} predictions have no annotation: {listed}")
    per_category: Dict[str, List[float]] = {name: [] for name in CATEGORIES.values()}
    per_type: Dict[str, List[float]] = {}
    per_question: Dict[str, float] = {}
    missing = 0
    for question_id in sorted(by_question):
        annotation = by_question[question_id]
        if question_id in predictions:
            accuracy = vqa_accuracy(predictions[question_id], annotation.answer_strings(), official)
        else:
            missing += 1
            diagnostics.add("missing_prediction", f"question_id {question_id}")
            accuracy = 0.0
        per_question[str(question_id)] = accuracy
        per_category[CATEGORIES[annotation.answer_type]].append(accuracy)
        per_type.setdefault(annotation.question_type, []).append(accuracy)
    scores = list(per_question.values())
    return AccuracyReport(
        overall=_percent(scores) or 0.0,
        yes_no=_percent(per_category["yes_no"]),
        number=_percent(per_category["number"]),
        other=_percent(per_category["other"]),
        counts={name: len(values) for name, values in per_category.items()},
        per_question_type={name: _percent(values) for name, values in sorted(per_type.items())},
        per_question=per_question,
        missing_predictions=missing,
    )


# ========== OVERLAP ========== #

BUCKETS = ("both_correct", "only_a_correct", "only_b_correct", "both_wrong")


@dataclass
class OverlapReport:
    both_correct: int = 0
    only_a_correct: int = 0
    only_b_correct: int = 0
    both_wrong: int = 0

    @property
    def total(self) -> int:
        return self.both_correct + self.only_a_correct + self.only_b_correct + self.both_wrong

    def ratios(self) -> Dict[str, float]:
        return {bucket: getattr(self, bucket) / self.total if self.total else 0.0 for bucket in BUCKETS}

    def swapped(self) -> "OverlapReport":
        return OverlapReport(self.both_correct, self.only_b_correct, self.only_a_correct, self.both_wrong)

    def to_record(self) -> Dict[str, Any]:
        return {"counts": {bucket: getattr(self, bucket) for bucket in BUCKETS},
                "ratios": self.ratios(), "total": self.total}


def is_correct(prediction: str, answers: Sequence[str], normalize: bool = False) -> bool:
    """Binary correctness: the prediction is one of the human answers"""
    return normalize_answer(prediction, normalize) in {normalize_answer(a, normalize) for a in answers}


def overlap(predictions_a: Mapping[QuestionId, str], predictions_b: Mapping[QuestionId, str],
            annotations: Sequence[AnnotationRecord], normalize: bool = False) -> OverlapReport:
    by_question = {a.question_id: a for a in annotations}
    shared = sorted(set(predictions_a) & set(predictions_b), key=str)
    if not shared:
        raise DataError("The two prediction files share no question_id")
    unknown = [qid for qid in shared if qid not in by_question]
    if unknown:
        raise DataError(f"{len(unknown)} shared questions have no annotation: "
                        f"{', '.join(str(q) for q in unknown[:10])}")
    report = OverlapReport()
    for question_id in shared:
        answers = by_question[question_id].answer_strings()
        a = is_correct(predictions_a[question_id], answers, normalize)
        b = is_correct(predictions_b[question_id], answers, normalize)
        if a and b:
            report.both_correct += 1
        elif a:
            report.only_a_correct += 1
        elif b:
            report.only_b_correct += 1
        else:
            report.both_wrong += 1
    return report
