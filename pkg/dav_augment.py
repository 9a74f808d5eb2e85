"""VQA-specific augmentation: hypernym/hyponym replacement, color inversion,
adversarial object replacement and counterfactual (masked) samples."""
import logging
import random
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from tqdm import tqdm

from errors import BackendError, Diagnostics, UsageError
from importance import Scorer, top_answers
from lexicon import (ColorSet, EmbeddingTable, LexicalGraph, ObjectClassSet, QuestionTypeSet,
                     is_color_question, replace_core, token_core)
from triplet_builder import MASK_TOKEN, ORIGINAL, Triplet, canonical_key, sample_rng

logger = logging.getLogger(__name__)

HYPERNYM = "hypernym"
HYPONYM = "hyponym"
COLOR_INVERSION = "color_inversion"
ADVERSARIAL = "adversarial"
CSS_QUESTION = "css_question"
CSS_DESCRIPTION = "css_description"
CSS = "css"

TECHNIQUES = (HYPERNYM, HYPONYM, COLOR_INVERSION, ADVERSARIAL, CSS_QUESTION, CSS_DESCRIPTION, CSS)
YES_NO = ("yes", "no")


@dataclass(frozen=True)
class DavConfig:
    colors: ColorSet
    question_types: QuestionTypeSet
    objects: ObjectClassSet
    top_d: int = 10
    top_j: int = 5
    skip_no_majority: bool = False

    def __post_init__(self):
        if self.top_d < 1:
            raise UsageError(f"top_d must be >= 1, got {self.top_d}")
        if self.top_j < 0:
            raise UsageError(f"top_j must be >= 0, got {self.top_j}")


@dataclass
class DavResources:
    """Everything the augmenters read; only the ones a technique needs must be set"""
    config: DavConfig
    graph: Optional[LexicalGraph] = None
    embeddings: Optional[EmbeddingTable] = None
    scorer: Optional[Scorer] = None


def _normalized(answer: str) -> str:
    return answer.strip().lower()


def _substitute(tokens: Sequence[str], word: str, replacement: str) -> Tuple[str, ...]:
    """Replace every token whose core equals ``word``"""
    result: List[str] = []
    for token in tokens:
        if token_core(token) == word:
            result.extend(replace_core(token, replacement).split())
        else:
            result.append(token)
    return tuple(result)


def _swap_answers(answers: Sequence[str], old: str, new: str) -> Tuple[str, ...]:
    return tuple(new if _normalized(answer) == old else answer for answer in answers)


# ========== HYPERNYM / HYPONYM ========== #

def _relation_replace(s: Triplet, graph: LexicalGraph, relation: str) -> Optional[Triplet]:
    description_cores = {token_core(token) for token in s.description}
    answer_words = [_normalized(answer) for answer in s.answers]
    in_description = [a for a in dict.fromkeys(answer_words) if a in description_cores]
    if not in_description:
        return None
    lookup = graph.hypernym_of if relation == HYPERNYM else graph.hyponym_of
    mapping: Dict[str, str] = {}
    for answer in in_description:
        related = lookup(answer)
        if related is None or answer in related.split():
            continue
        mapping[answer] = related
    if not mapping:
        return None
    # an existing answer would collide with the substitute
    if any(related in answer_words for related in mapping.values()):
        return None
    description, answers = s.description, s.answers
    for answer, related in mapping.items():
        description = _substitute(description, answer, related)
        answers = _swap_answers(answers, answer, related)
    return s.derive(relation, description=description, answers=answers)


def hypernym_replace(s: Triplet, graph: LexicalGraph) -> Optional[Triplet]:
    return _relation_replace(s, graph, HYPERNYM)


def hyponym_replace(s: Triplet, graph: LexicalGraph) -> Optional[Triplet]:
    return _relation_replace(s, graph, HYPONYM)


# ========== COLOR INVERSION ========== #

def color_invert(s: Triplet, config: DavConfig, rng: random.Random) -> Optional[Triplet]:
    """Swap the answer color in the description for another color"""
    if not is_color_question(s.question_type, config.question_types):
        return None
    description_cores = {token_core(token) for token in s.description}
    color = next((_normalized(a) for a in s.answers
                  if _normalized(a) in config.colors and _normalized(a) in description_cores), None)
    if color is None:
        return None
    replacement = rng.choice([c for c in config.colors.colors if c != color])
    return s.derive(
        COLOR_INVERSION,
        description=_substitute(s.description, color, replacement),
        answers=_swap_answers(s.answers, color, replacement),
    )


# ========== ADVERSARIAL ========== #

def _mentions(question_cores: Sequence[str], words: Iterable[str]) -> bool:
    padded = f" {' '.join(question_cores)} "
    return any(f" {word} " in padded for word in words)


def _majority(answers: Sequence[str]) -> str:
    counts = Counter(_normalized(a) for a in answers)
    return counts.most_common(1)[0][0] if counts else ""


def adversarial_replace(s: Triplet, config: DavConfig, embeddings: EmbeddingTable,
                        graph: Optional[LexicalGraph] = None,
                        diagnostics: Optional[Diagnostics] = None) -> List[Triplet]:
    """One sample per object class in the description, swapped for its
    nearest embedding neighbor outside its synonyms"""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    if not any(_normalized(a) in YES_NO for a in s.answers):
        return []
    description_cores = {token_core(token) for token in s.description}
    question_cores = [token_core(token) for token in s.question]
    results = []
    for name in config.objects.classes:
        if " " in name or name not in description_cores:
            continue
        synonyms = set(config.objects.synonyms_of(name))
        if graph is not None:
            synonyms.update(graph.synonyms_of(name))
        if name not in embeddings:
            diagnostics.add("adversarial_oov", f"question_id {s.question_id}: '{name}' has no vector")
            continue
        adversary = embeddings.adversary(name, synonyms | {name})
        if adversary is None:
            diagnostics.add("adversarial_no_candidate", f"question_id {s.question_id}: '{name}'")
            continue
        asked = _mentions(question_cores, synonyms | {name})
        if asked and config.skip_no_majority and _majority(s.answers) == "no":
            continue
        answers = ("no",) * len(s.answers) if asked else s.answers
        results.append(s.derive(ADVERSARIAL, name.replace(" ", "_"),
                                description=_substitute(s.description, name, adversary), answers=answers))
    return results


# ========== COUNTERFACTUAL ========== #

def question_type_prefix_length(question: Sequence[str], question_type: str) -> int:
    """Length of the longest common prefix of the question and its question type"""
    length = 0
    for token, type_word in zip(question, question_type.lower().split()):
        if token_core(token) != token_core(type_word):
            break
        length += 1
    return length


def critical_positions(scores: Sequence[float], candidates: Sequence[int], top_d: int) -> List[int]:
    """Top ``top_d`` candidate positions by score; earlier positions win ties"""
    ranked = sorted(candidates, key=lambda i: (-scores[i], i))
    return sorted(ranked[:top_d])


def _mask(tokens: Sequence[str], positions: Iterable[int]) -> Tuple[str, ...]:
    masked = set(positions)
    return tuple(MASK_TOKEN if i in masked else token for i, token in enumerate(tokens))


def _counterfactual(s: Triplet, scorer: Scorer, config: DavConfig, on_question: bool,
                    diagnostics: Diagnostics) -> Optional[Triplet]:
    tokens = s.question if on_question else s.description
    protected = question_type_prefix_length(s.question, s.question_type) if on_question else 0
    candidates = list(range(protected, len(tokens)))
    if not candidates:
        return None
    origin = CSS_QUESTION if on_question else CSS_DESCRIPTION
    try:
        scores = scorer.score(s.question, s.description, s.question_id, s.answers)
        token_scores = scores.question_scores if on_question else scores.description_scores
        critical = critical_positions(token_scores, candidates, config.top_d)
        kept = _mask(tokens, [i for i in candidates if i not in critical])
        if on_question:
            removed = top_answers(kept, s.description, config.top_j, scorer, s.answers, s.question_id)
        else:
            removed = top_answers(s.question, kept, config.top_j, scorer, s.answers, s.question_id)
    except BackendError as e:
        diagnostics.add("scorer_failure", f"question_id {s.question_id} ({origin}): {e}")
        return None
    answers = tuple(a for a in s.answers if a not in removed)
    if not answers:
        return None
    field_name = "question" if on_question else "description"
    return s.derive(origin, answers=answers, **{field_name: _mask(tokens, critical)})


def css_question(s: Triplet, scorer: Scorer, config: DavConfig,
                 diagnostics: Optional[Diagnostics] = None) -> Optional[Triplet]:
    """Mask the critical question words; the question-type prefix is never masked"""
    return _counterfactual(s, scorer, config, True, diagnostics if diagnostics is not None else Diagnostics())


def css_description(s: Triplet, scorer: Scorer, config: DavConfig,
                    diagnostics: Optional[Diagnostics] = None) -> Optional[Triplet]:
    return _counterfactual(s, scorer, config, False, diagnostics if diagnostics is not None else Diagnostics())


def css(s: Triplet, scorer: Scorer, config: DavConfig, rng: random.Random,
        diagnostics: Optional[Diagnostics] = None) -> Optional[Triplet]:
    """One counterfactual per sample: a randomly chosen branch, else the other one"""
    branches = [css_question, css_description]
    if rng.random() < 0.5:
        branches.reverse()
    for branch in branches:
        sample = branch(s, scorer, config, diagnostics)
        if sample is not None:
            return sample
    return None


# ========== RUNNER ========== #

def parse_techniques(text: str) -> List[str]:
    """``hypernym,hyponym`` -> ["hypernym", "hyponym"]"""
    names = [name.strip().lower() for name in text.split(",") if name.strip()]
    unknown = [name for name in names if name not in TECHNIQUES]
    if unknown or not names:
        raise UsageError(f"Unknown augmentation technique(s): {', '.join(unknown) or text!r}")
    return list(dict.fromkeys(names))


def _require(value, what: str, technique: str):
    if value is None:
        raise UsageError(f"Technique '{technique}' needs {what}")
    return value


def augment(s: Triplet, technique: str, resources: DavResources, seed: int,
            diagnostics: Optional[Diagnostics] = None) -> List[Triplet]:
    """Apply one technique to an original triplet"""
    if s.origin != ORIGINAL:
        return []
    config = resources.config
    if technique in (HYPERNYM, HYPONYM):
        graph = _require(resources.graph, "a lexical graph", technique)
        sample = hypernym_replace(s, graph) if technique == HYPERNYM else hyponym_replace(s, graph)
        return [sample] if sample else []
    if technique == COLOR_INVERSION:
        sample = color_invert(s, config, sample_rng(seed, s.parent_question_id, COLOR_INVERSION))
        return [sample] if sample else []
    if technique == ADVERSARIAL:
        embeddings = _require(resources.embeddings, "an embedding table", technique)
        return adversarial_replace(s, config, embeddings, resources.graph, diagnostics)
    scorer = _require(resources.scorer, "a scorer backend", technique)
    if technique == CSS_QUESTION:
        sample = css_question(s, scorer, config, diagnostics)
    elif technique == CSS_DESCRIPTION:
        sample = css_description(s, scorer, config, diagnostics)
    elif technique == CSS:
        sample = css(s, scorer, config, sample_rng(seed, s.parent_question_id, CSS), diagnostics)
    else:
        raise UsageError(f"Unknown augmentation technique '{technique}'")
    return [sample] if sample else []


def run_dav(triplets: Sequence[Triplet], techniques: Sequence[str], resources: DavResources, seed: int,
            diagnostics: Optional[Diagnostics] = None, progress: bool = True) -> Tuple[List[Triplet], Dict[str, int]]:
    """Synthetic samples of all techniques (in canonical order) and a count per technique"""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    counts: Dict[str, int] = {technique: 0 for technique in techniques}
    synthetic: Dict[str, Triplet] = {}
    for s in tqdm(triplets, desc=f"Augmenting ({'+'.join(techniques)})", disable=not progress):
        for technique in techniques:
            for sample in augment(s, technique, resources, seed, diagnostics):
                key = str(sample.question_id)
                if key in synthetic:
                    continue
                synthetic[key] = sample
                counts[technique] += 1
    return sorted(synthetic.values(), key=canonical_key), counts
