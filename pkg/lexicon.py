"""Static lexical resources: relation graph, word vectors, colors,
color question types and the COCO object classes."""
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from config import resource_path
from errors import DataError, Diagnostics

logger = logging.getLogger(__name__)

RELATIONS = ("synonym", "hypernym", "hyponym")
PUNCTUATION = ".,!?;:\"'()[]{}"


def token_core(token: str) -> str:
    """Lowercase token with surrounding punctuation stripped"""
    return token.strip(PUNCTUATION).lower()


def replace_core(token: str, replacement: str) -> str:
    """Swap the core of a token, keeping its attached punctuation"""
    core = token.strip(PUNCTUATION)
    if not core:
        return replacement
    start = token.find(core)
    return token[:start] + replacement + token[start + len(core):]


def read_word_list(path: str) -> List[str]:
    """One entry per line; blanks and #-comments ignored"""
    if not os.path.exists(path):
        raise DataError(f"Word list not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        words = [line.strip() for line in f]
    return [word for word in words if word and not word.startswith("#")]


# ========== LEXICAL GRAPH ========== #

@dataclass
class LexicalGraph:
    entries: Dict[str, Dict[str, List[str]]] = field(default_factory=dict)

    def _relation(self, word: str, relation: str) -> List[str]:
        entry = self.entries.get(word.strip().lower())
        return entry[relation] if entry else []

    def add(self, word: str, relation: str, other: str) -> None:
        entry = self.entries.setdefault(word, {name: [] for name in RELATIONS})
        if other not in entry[relation]:
            entry[relation].append(other)

    def hypernym_of(self, word: str) -> Optional[str]:
        related = self._relation(word, "hypernym")
        return related[0] if related else None

    def hyponym_of(self, word: str) -> Optional[str]:
        related = self._relation(word, "hyponym")
        return related[0] if related else None

    def synonyms_of(self, word: str) -> List[str]:
        return list(self._relation(word, "synonym"))

    def __len__(self) -> int:
        return len(self.entries)


def load_lexical_graph(path: str, diagnostics: Optional[Diagnostics] = None) -> LexicalGraph:
    """Read ``word<TAB>relation<TAB>word`` lines; list order is file order"""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    if not os.path.exists(path):
        raise DataError(f"Lexicon file not found: {path}")
    graph = LexicalGraph()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = [part.strip() for part in line.split("\t")]
            if len(parts) != 3 or not parts[0] or not parts[2]:
                diagnostics.add("malformed_relation", f"{path}:{line_no}")
                continue
            word, relation, other = parts[0].lower(), parts[1].lower(), parts[2].lower()
            if relation not in RELATIONS:
                diagnostics.add("unknown_relation", f"{path}:{line_no}: {relation}")
                continue
            if word == other:
                diagnostics.add("self_relation", f"{path}:{line_no}: {word}")
                continue
            graph.add(word, relation, other)
    logger.info(f"Loaded lexical graph with {len(graph)} entries from {path}")
    return graph


def import_wordnet(out_path: str, root: Optional[str] = None,
                   vocabulary: Optional[Iterable[str]] = None) -> int:
    """Convert a WordNet database into the relation file format

    ``root`` is a native WordNet dict directory; without it the NLTK copy is
    used (downloaded on first use). Senses are visited in WordNet order so the
    first listed hypernym/hyponym of a word comes from its first sense."""
    import nltk
    from nltk.corpus.reader.wordnet import WordNetCorpusReader

    if root:
        if not os.path.isdir(root):
            raise DataError(f"WordNet directory not found: {root}")
        wordnet = WordNetCorpusReader(root, None)
    else:
        try:
            nltk.data.find("corpora/wordnet")
        except LookupError:
            nltk.download("wordnet")
        from nltk.corpus import wordnet

    words = sorted(set(vocabulary)) if vocabulary is not None else sorted(wordnet.all_lemma_names())
    lines = []
    for word in tqdm(words, desc="Importing WordNet"):
        if "_" in word or " " in word:
            continue
        seen = set()
        for synset in wordnet.synsets(word):
            related = [("synonym", [synset])]
            related.append(("hypernym", synset.hypernyms()))
            related.append(("hyponym", synset.hyponyms()))
            for relation, synsets in related:
                for other_synset in synsets:
                    for lemma in other_synset.lemma_names():
                        other = lemma.lower()
                        if "_" in other or other == word or (relation, other) in seen:
                            continue
                        seen.add((relation, other))
                        lines.append(f"{word}\t{relation}\t{other}\n")
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        f.writelines(lines)
    logger.info(f"Wrote {len(lines)} relations to {out_path}")
    return len(lines)


# ========== EMBEDDINGS ========== #

LOAD_BLOCK_ROWS = 65536


@dataclass
class EmbeddingTable:
    """Word vectors as one float32 matrix, rows in file order"""
    vocabulary: List[str]
    vectors: np.ndarray
    index: Dict[str, int] = field(default_factory=dict)
    squared_norms: np.ndarray = field(init=False, repr=False, compare=False)
    max_squared_norm: float = field(init=False, repr=False, compare=False)
    _adversaries: Dict[Tuple[str, FrozenSet[str]], Optional[str]] = field(
        init=False, repr=False, compare=False, default_factory=dict)
    _lock: threading.Lock = field(init=False, repr=False, compare=False, default_factory=threading.Lock)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if not self.index:
            self.index = {word: i for i, word in enumerate(self.vocabulary)}
        self.squared_norms = np.einsum("ij,ij->i", self.vectors, self.vectors, dtype=np.float64)
        self.max_squared_norm = float(self.squared_norms.max()) if len(self.squared_norms) else 0.0

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def __len__(self) -> int:
        return len(self.vocabulary)

    def adversary(self, word: str, exclusions: Iterable[str]) -> Optional[str]:
        """Memoized :func:`nearest_adversarial`"""
        key = (word, frozenset(exclusions))
        with self._lock:
            if key in self._adversaries:
                return self._adversaries[key]
        result = nearest_adversarial(word, key[1], self)
        with self._lock:
            self._adversaries[key] = result
        return result


def load_embeddings(path: str, diagnostics: Optional[Diagnostics] = None) -> EmbeddingTable:
    """Read header-free ``word v1 ... vd`` lines; d comes from the first line"""
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    if not os.path.exists(path):
        raise DataError(f"Embedding file not found: {path}")
    vocabulary: List[str] = []
    blocks: List[np.ndarray] = []
    block: Optional[np.ndarray] = None
    filled = 0
    seen = set()
    dimension = None
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                if line.strip():
                    diagnostics.add("malformed_vector", f"{path}:{line_no}")
                continue
            word, values = parts[0], parts[1:]
            if dimension is None:
                dimension = len(values)
            if len(values) != dimension:
                diagnostics.add("dimension_mismatch", f"{path}:{line_no}: {len(values)} != {dimension}")
                continue
            if word in seen:
                diagnostics.add("duplicate_word", f"{path}:{line_no}: {word}")
                continue
            try:
                row = np.asarray(values, dtype=np.float32)
            except ValueError:
                diagnostics.add("malformed_vector", f"{path}:{line_no}")
                continue
            if block is None or filled == len(block):
                if block is not None:
                    blocks.append(block)
                block = np.empty((LOAD_BLOCK_ROWS, dimension), dtype=np.float32)
                filled = 0
            block[filled] = row
            filled += 1
            seen.add(word)
            vocabulary.append(word)
    if not vocabulary:
        raise DataError("empty embedding table")
    blocks.append(block[:filled].copy())
    vectors = blocks[0] if len(blocks) == 1 else np.concatenate(blocks)
    logger.info(f"Loaded {len(vocabulary)} vectors of dimension {dimension} from {path}")
    return EmbeddingTable(vocabulary, vectors)


def nearest_adversarial(word: str, exclusions: Iterable[str], table: EmbeddingTable) -> Optional[str]:
    """Closest vocabulary word by Euclidean distance, excluding the word and its synonyms

    Squared distances come from the norm expansion; rows close to the best
    one are then re-measured exactly, and ties go to the earlier vocabulary
    entry."""
    position = table.index.get(word)
    if position is None:
        return None
    vector = table.vectors[position]
    own_norm = table.squared_norms[position]
    approx = table.squared_norms - 2.0 * (table.vectors @ vector).astype(np.float64) + own_norm
    approx[position] = np.inf
    for excluded in exclusions:
        excluded_position = table.index.get(excluded)
        if excluded_position is not None:
            approx[excluded_position] = np.inf
    best = approx.min()
    if not np.isfinite(best):
        return None
    # float32 dot product error bound, once for this row and once for the best one
    slack = table.dimension * np.finfo(np.float32).eps * (table.max_squared_norm + own_norm)
    candidates = np.flatnonzero(approx <= best + slack)
    exact = ((table.vectors[candidates].astype(np.float64) - vector.astype(np.float64)) ** 2).sum(axis=1)
    return table.vocabulary[int(candidates[int(np.argmin(exact))])]


# ========== COLORS, QUESTION TYPES, OBJECTS ========== #

@dataclass(frozen=True)
class ColorSet:
    colors: tuple

    def __post_init__(self):
        if len(set(self.colors)) != len(self.colors):
            raise DataError("Color set contains duplicates")
        if len(self.colors) < 2:
            raise DataError("Color set needs at least 2 colors")
        for color in self.colors:
            if color != color.lower() or len(color.split()) != 1:
                raise DataError(f"Color '{color}' must be a lowercase single token")

    def __contains__(self, word: str) -> bool:
        return word in self.colors


@dataclass(frozen=True)
class QuestionTypeSet:
    types: FrozenSet[str]


@dataclass(frozen=True)
class ObjectClassSet:
    classes: tuple
    synonyms: Dict[str, tuple] = field(default_factory=dict, hash=False, compare=False)

    def synonyms_of(self, name: str) -> tuple:
        return self.synonyms.get(name, ())


def load_color_set(path: Optional[str] = None) -> ColorSet:
    return ColorSet(tuple(word.lower() for word in read_word_list(path or resource_path("colors.txt"))))


def load_question_types(path: Optional[str] = None) -> QuestionTypeSet:
    types = read_word_list(path or resource_path("color_question_types.txt"))
    return QuestionTypeSet(frozenset(" ".join(t.lower().split()) for t in types))


def is_color_question(question_type: str, question_types: QuestionTypeSet) -> bool:
    return question_type.strip().lower() in question_types.types


def load_object_classes(path: Optional[str] = None, aliases_path: Optional[str] = None,
                        graph: Optional[LexicalGraph] = None) -> ObjectClassSet:
    """COCO classes with synonyms from the graph plus the alias file"""
    classes = tuple(" ".join(word.lower().split()) for word in read_word_list(path or resource_path("coco_classes.txt")))
    if path is None and len(classes) != 80:
        raise DataError(f"Default object class list must have 80 entries, found {len(classes)}")
    synonyms: Dict[str, List[str]] = {name: [] for name in classes}
    if graph is not None:
        for name in classes:
            synonyms[name].extend(graph.synonyms_of(name))
    alias_file = aliases_path or resource_path("object_aliases.tsv")
    for line in read_word_list(alias_file):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"Malformed alias line in {alias_file}: {line!r}")
        name, alias = parts[0].strip().lower(), parts[1].strip().lower()
        if name in synonyms and alias not in synonyms[name] and alias != name:
            synonyms[name].append(alias)
    return ObjectClassSet(classes, {name: tuple(words) for name, words in synonyms.items()})
