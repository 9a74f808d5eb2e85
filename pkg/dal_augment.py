"""Language augmentation of either the question or the description: EDA,
back translation and contextual word replacement/insertion."""
import logging
import random
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from tqdm import tqdm

from errors import BackendError, Diagnostics, UsageError
from lexicon import LexicalGraph, replace_core, token_core
from services import InfillClient, TranslationClient
from triplet_builder import ORIGINAL, Triplet, canonical_key, sample_rng

logger = logging.getLogger(__name__)

EDA = "eda"
BACK_TRANSLATION = "bt"
CONTEXTUAL_REPLACE = "cwr"
CONTEXTUAL_INSERT = "cwi"
TECHNIQUES = (EDA, BACK_TRANSLATION, CONTEXTUAL_REPLACE, CONTEXTUAL_INSERT)

TARGETS = {"question": "q", "description": "d"}

SYNONYM_REPLACEMENT = "sr"
RANDOM_INSERTION = "ri"
RANDOM_SWAP = "rs"
RANDOM_DELETION = "rd"
EDA_OPERATIONS = (SYNONYM_REPLACEMENT, RANDOM_INSERTION, RANDOM_SWAP, RANDOM_DELETION)


@dataclass(frozen=True)
class DalConfig:
    eda_rate: float = 0.1
    eda_deletion_p: float = 0.1
    contextual_k: Optional[int] = None
    stopwords: FrozenSet[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not 0 < self.eda_rate <= 1:
            raise UsageError(f"eda_rate must be within (0, 1], got {self.eda_rate}")
        if not 0 <= self.eda_deletion_p <= 1:
            raise UsageError(f"eda_deletion_p must be within [0, 1], got {self.eda_deletion_p}")
        if self.contextual_k is not None and self.contextual_k < 0:
            raise UsageError(f"contextual_k must be >= 0, got {self.contextual_k}")

    def words_to_change(self, length: int) -> int:
        return max(1, round(self.eda_rate * length))


@dataclass
class DalClients:
    translation: Optional[TranslationClient] = None
    infill: Optional[InfillClient] = None


def origin_for(technique: str, target: str) -> str:
    """``bt`` + ``question`` -> ``bt_q``"""
    return f"{technique}_{TARGETS[target]}"


# ========== EDA ========== #

def _synonyms(token: str, graph: LexicalGraph, stopwords: FrozenSet[str]) -> List[str]:
    core = token_core(token)
    if not core or core in stopwords:
        return []
    return [word for word in graph.synonyms_of(core) if " " not in word and word != core]


def synonym_replacement(tokens: Sequence[str], n: int, rng: random.Random, graph: LexicalGraph,
                        stopwords: FrozenSet[str] = frozenset()) -> Optional[List[str]]:
    """Replace up to n words with a synonym; None when no word has one"""
    result = list(tokens)
    candidates = [i for i, token in enumerate(tokens) if _synonyms(token, graph, stopwords)]
    if not candidates:
        return None
    rng.shuffle(candidates)
    for i in candidates[:n]:
        result[i] = replace_core(result[i], rng.choice(_synonyms(tokens[i], graph, stopwords)))
    return result


def random_insertion(tokens: Sequence[str], n: int, rng: random.Random, graph: LexicalGraph,
                     stopwords: FrozenSet[str] = frozenset()) -> Optional[List[str]]:
    """Insert a synonym of a random word at a random position, n times"""
    result = list(tokens)
    sources = [token for token in tokens if _synonyms(token, graph, stopwords)]
    if not sources:
        return None
    for _ in range(n):
        synonym = rng.choice(_synonyms(rng.choice(sources), graph, stopwords))
        result.insert(rng.randint(0, len(result)), synonym)
    return result


def random_swap(tokens: Sequence[str], n: int, rng: random.Random) -> List[str]:
    result = list(tokens)
    if len(result) < 2:
        return result
    for _ in range(n):
        first, second = rng.sample(range(len(result)), 2)
        result[first], result[second] = result[second], result[first]
    return result


def random_deletion(tokens: Sequence[str], p: float, rng: random.Random) -> List[str]:
    """Drop each word with probability p; one random word survives if all would go"""
    if len(tokens) <= 1:
        return list(tokens)
    kept = [token for token in tokens if rng.random() > p]
    if not kept:
        return [rng.choice(list(tokens))]
    return kept


def eda(tokens: Sequence[str], config: DalConfig, rng: random.Random,
        graph: LexicalGraph) -> Tuple[List[str], str]:
    """Apply one uniformly chosen EDA operation; returns the tokens and the operation used

    Synonym replacement and insertion fall back to random swap when no sampled
    word has a synonym."""
    if not tokens:
        raise UsageError("EDA needs a non-empty sentence")
    n = config.words_to_change(len(tokens))
    operation = rng.choice(EDA_OPERATIONS)
    if operation == SYNONYM_REPLACEMENT:
        result = synonym_replacement(tokens, n, rng, graph, config.stopwords)
    elif operation == RANDOM_INSERTION:
        result = random_insertion(tokens, n, rng, graph, config.stopwords)
    elif operation == RANDOM_DELETION:
        return random_deletion(tokens, config.eda_deletion_p, rng), operation
    else:
        return random_swap(tokens, n, rng), operation
    if result is None:
        return random_swap(tokens, n, rng), RANDOM_SWAP
    return result, operation


# ========== CLIENT-BACKED ========== #

def back_translate(sentence: str, client: TranslationClient) -> Optional[str]:
    """Pivot round trip; None when the paraphrase equals the input"""
    output = client.round_trip(sentence)
    if not output.strip() or " ".join(output.split()) == " ".join(sentence.split()):
        return None
    return output.strip()


def _contextual_word(client: InfillClient, tokens: Sequence[str], position: int, mode: str) -> str:
    word = client.infill(tokens, position, mode)
    if len(word.split()) != 1:
        raise BackendError(f"infill returned {word!r}, expected a single token")
    return word.strip()


def contextual_replace(tokens: Sequence[str], client: InfillClient, rng: random.Random, k: int) -> List[str]:
    result = list(tokens)
    if k <= 0 or not result:
        return result
    for position in sorted(rng.sample(range(len(result)), min(k, len(result)))):
        result[position] = _contextual_word(client, result, position, "replace")
    return result


def contextual_insert(tokens: Sequence[str], client: InfillClient, rng: random.Random, k: int) -> List[str]:
    """Insert a contextual word after each of k random positions"""
    result = list(tokens)
    if k <= 0 or not result:
        return result
    # right to left so earlier positions stay valid
    for position in sorted(rng.sample(range(len(result)), min(k, len(result))), reverse=True):
        result.insert(position + 1, _contextual_word(client, result, position, "insert"))
    return result


# ========== SAMPLES ========== #

def apply_dal(s: Triplet, technique: str, target: str, config: DalConfig, clients: DalClients,
              graph: Optional[LexicalGraph], seed: int,
              diagnostics: Optional[Diagnostics] = None) -> Optional[Triplet]:
    """Rewrite only the target field of an original triplet; answers are kept"""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    if technique not in TECHNIQUES:
        raise UsageError(f"Unknown language augmentation '{technique}'")
    if target not in TARGETS:
        raise UsageError(f"Unknown augmentation target '{target}'")
    if s.origin != ORIGINAL:
        return None
    origin = origin_for(technique, target)
    tokens = s.question if target == "question" else s.description
    if not tokens:
        diagnostics.add(f"empty_{target}", f"question_id {s.question_id} ({origin})")
        return None
    rng = sample_rng(seed, s.parent_question_id, origin)
    try:
        if technique == EDA:
            if graph is None:
                raise UsageError("EDA needs a lexical graph")
            rewritten, operation = eda(tokens, config, rng, graph)
            logger.debug(f"{s.question_id}: EDA {operation}")
        elif technique == BACK_TRANSLATION:
            if clients.translation is None:
                raise UsageError("Back translation needs a translation client")
            paraphrase = back_translate(" ".join(tokens), clients.translation)
            if paraphrase is None:
                diagnostics.add("bt_unchanged", f"question_id {s.question_id} ({origin})")
                return None
            rewritten = paraphrase.split()
        else:
            if clients.infill is None:
                raise UsageError("Contextual augmentation needs an infill client")
            k = config.contextual_k if config.contextual_k is not None else config.words_to_change(len(tokens))
            augment = contextual_replace if technique == CONTEXTUAL_REPLACE else contextual_insert
            rewritten = augment(tokens, clients.infill, rng, k)
    except BackendError as e:
        diagnostics.add("backend_failure", f"question_id {s.question_id} ({origin}): {e}")
        return None
    if not rewritten:
        diagnostics.add(f"empty_{target}", f"question_id {s.question_id} ({origin}) after rewrite")
        return None
    return s.derive(origin, **{target: tuple(rewritten)})


def run_dal(triplets: Sequence[Triplet], technique: str, target: str, config: DalConfig, clients: DalClients,
            graph: Optional[LexicalGraph], seed: int, diagnostics: Optional[Diagnostics] = None,
            progress: bool = True) -> Tuple[List[Triplet], Dict[str, int]]:
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    origin = origin_for(technique, target)
    synthetic = []
    for s in tqdm(triplets, desc=f"Augmenting ({origin})", disable=not progress):
        sample = apply_dal(s, technique, target, config, clients, graph, seed, diagnostics)
        if sample is not None:
            synthetic.append(sample)
    return sorted(synthetic, key=canonical_key), {origin: len(synthetic)}
