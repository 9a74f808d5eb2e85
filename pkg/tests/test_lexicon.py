import numpy as np
import pytest

import lexicon
from errors import DataError, Diagnostics
from lexicon import (ColorSet, EmbeddingTable, is_color_question, load_color_set, load_embeddings,
                     load_lexical_graph, load_object_classes, load_question_types, nearest_adversarial,
                     replace_core, token_core)


def test_graph_relations_keep_file_order(graph):
    assert graph.hypernym_of("fruit") == "food"
    assert graph.hyponym_of("fruit") == "apple"
    assert graph.hypernym_of("Fruit") == "food"
    assert graph.synonyms_of("dog") == ["puppy", "doggy"]
    assert graph.hypernym_of("banana") is None
    assert graph.synonyms_of("banana") == []


def test_bad_relation_lines_are_counted(tmp_path):
    path = tmp_path / "lexicon.tsv"
    path.write_text("cat\thypernym\tfeline\ncat\tmeronym\twhisker\ncat\thypernym\ncat\tsynonym\tcat\n",
                    encoding="utf-8")
    diagnostics = Diagnostics()

    graph = load_lexical_graph(str(path), diagnostics)

    assert graph.hypernym_of("cat") == "feline"
    assert diagnostics.as_dict() == {"malformed_relation": 1, "self_relation": 1, "unknown_relation": 1}


def test_missing_lexicon_is_a_data_error(tmp_path):
    with pytest.raises(DataError):
        load_lexical_graph(str(tmp_path / "nope.tsv"))


def test_embeddings_skip_lines_with_the_wrong_dimension(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("a 1 2\nb 1 2 3\na 3 4\nc 0 1\n", encoding="utf-8")
    diagnostics = Diagnostics()

    table = load_embeddings(str(path), diagnostics)

    assert table.vocabulary == ["a", "c"]
    assert table.dimension == 2
    assert diagnostics.count("dimension_mismatch") == 1
    assert diagnostics.count("duplicate_word") == 1


def test_empty_embedding_table_is_rejected(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("\n", encoding="utf-8")

    with pytest.raises(DataError, match="empty embedding table"):
        load_embeddings(str(path))


def test_nearest_adversarial_skips_synonyms(embeddings):
    assert nearest_adversarial("dog", ["puppy", "doggy"], embeddings) == "cat"
    assert nearest_adversarial("dog", [], embeddings) == "puppy"
    assert nearest_adversarial("pizza", [], embeddings) == "burger"
    assert nearest_adversarial("unicorn", [], embeddings) is None


def test_nearest_adversarial_ties_go_to_the_earlier_word():
    table = EmbeddingTable(["x", "left", "right"], np.array([[0.0, 0.0], [-1.0, 0.0], [1.0, 0.0]]))

    assert nearest_adversarial("x", [], table) == "left"
    assert nearest_adversarial("x", ["left", "right"], table) is None


def test_embeddings_load_as_float32(embeddings):
    assert embeddings.vectors.dtype == np.float32
    assert embeddings.vectors.shape == (8, 3)
    assert embeddings.squared_norms[embeddings.index["tree"]] == pytest.approx(75.0)


def test_nearest_adversarial_survives_a_large_common_offset():
    offset = np.full(4, 1000.0)
    vectors = np.array([offset, offset + [0.0, 0.5, 0.0, 0.0], offset + [0.25, 0.0, 0.0, 0.0], offset - 3.0])
    table = EmbeddingTable(["x", "far", "near", "farthest"], vectors)

    assert nearest_adversarial("x", [], table) == "near"
    assert nearest_adversarial("x", ["near"], table) == "far"


def test_adversary_lookups_are_memoized(embeddings, monkeypatch):
    calls = []
    real = lexicon.nearest_adversarial

    def counting(word, exclusions, table):
        calls.append(word)
        return real(word, exclusions, table)

    monkeypatch.setattr(lexicon, "nearest_adversarial", counting)

    assert embeddings.adversary("dog", ["puppy", "dog"]) == "cat"
    assert embeddings.adversary("dog", {"dog", "puppy"}) == "cat"
    assert embeddings.adversary("dog", ["dog"]) == "puppy"
    assert calls == ["dog", "dog"]


def test_nearest_adversarial_matches_brute_force():
    rng = np.random.default_rng(7)
    vocabulary = [f"w{i}" for i in range(60)]
    table = EmbeddingTable(vocabulary, rng.normal(size=(60, 8)))

    for word in vocabulary[:20]:
        excluded = set(vocabulary[int(word[1:]) + 1:int(word[1:]) + 4])
        candidates = [w for w in vocabulary if w != word and w not in excluded]
        expected = min(candidates, key=lambda w: (
            np.linalg.norm(table.vectors[table.index[w]] - table.vectors[table.index[word]]),
            table.index[w],
        ))
        assert nearest_adversarial(word, excluded, table) == expected


def test_color_set_validation():
    assert "red" in load_color_set()
    with pytest.raises(DataError):
        ColorSet(("red", "red"))
    with pytest.raises(DataError):
        ColorSet(("red",))
    with pytest.raises(DataError):
        ColorSet(("red", "Dark Blue"))


def test_color_question_types_match_after_normalizing():
    types = load_question_types()

    assert is_color_question("what color is the", types)
    assert is_color_question("  What Color ", types)
    assert not is_color_question("what is the", types)


def test_default_object_classes(graph):
    objects = load_object_classes(graph=graph)

    assert len(objects.classes) == 80
    assert objects.synonyms_of("tv") == ("television",)
    assert objects.synonyms_of("dog") == ("puppy", "doggy")
    assert "man" in objects.synonyms_of("person")
    assert "dining table" in objects.classes


def test_token_helpers_keep_punctuation():
    assert token_core("Fruit.") == "fruit"
    assert token_core("...") == ""
    assert replace_core("(fruit),", "food") == "(food),"
    assert replace_core("apple", "fruit") == "fruit"
