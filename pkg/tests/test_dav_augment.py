import json
import random
from dataclasses import replace

import numpy as np
import pytest

from dav_augment import (DavConfig, DavResources, adversarial_replace, augment, color_invert, critical_positions, css,
                         css_description, css_question, hypernym_replace, hyponym_replace, parse_techniques,
                         question_type_prefix_length, run_dav)
from errors import BackendError, Diagnostics, UsageError
from importance import FileScorer, LexicalOverlapScorer, Scorer
from lexicon import token_core
from triplet_builder import MASK_TOKEN


@pytest.fixture
def config(dav_lexicon):
    return DavConfig(**dav_lexicon)


def write_scores(tmp_path, *records):
    path = tmp_path / "scores.jsonl"
    path.write_text("".join(json.dumps(record) + "\n" for record in records), encoding="utf-8")
    return FileScorer(str(path))


class FailingScorer(Scorer):
    def score(self, question, description, question_id, answers=()):
        raise BackendError("service unavailable")


# ========== HYPERNYM / HYPONYM ========== #

def test_hypernym_replaces_answer_in_description_and_answers(make_triplet, graph):
    s = make_triplet("what is in the bowl?", "a bowl of fruit .", ["fruit"] * 6 + ["banana"] * 4)

    out = hypernym_replace(s, graph)

    assert out.description == ("a", "bowl", "of", "food", ".")
    assert out.answers == ("food",) * 6 + ("banana",) * 4
    assert out.question == s.question
    assert out.question_id == "1-hypernym"


def test_hypernym_keeps_attached_punctuation(make_triplet, graph):
    s = make_triplet("what is it?", "some fruit. More Fruit!", "fruit")

    out = hypernym_replace(s, graph)

    assert out.description == ("some", "food.", "More", "food!")


def test_hypernym_skips_when_substitute_is_already_an_answer(make_triplet, graph):
    s = make_triplet("what is it?", "a bowl of fruit .", ["fruit"] * 5 + ["food"] * 5)

    assert hypernym_replace(s, graph) is None


def test_hyponym_skips_when_substitute_is_already_an_answer(make_triplet, graph):
    s = make_triplet("what is it?", "a bowl of fruit .", ["fruit"] * 5 + ["apple"] * 5)

    assert hyponym_replace(s, graph) is None
    assert hyponym_replace(make_triplet("what is it?", "fruit .", "fruit"), graph).answers == ("apple",) * 10


def test_no_sample_without_answer_in_description(make_triplet, graph):
    s = make_triplet("what is it?", "a bowl on a table .", "fruit")

    assert hypernym_replace(s, graph) is None
    assert hyponym_replace(s, graph) is None


# ========== COLOR INVERSION ========== #

def test_color_inversion(make_triplet, config):
    s = make_triplet("what color is the car?", "a red car near a red sign .", "red", question_type="what color is the")

    out = color_invert(s, config, random.Random(0))

    new_color = out.answers[0]
    assert new_color != "red" and new_color in config.colors
    assert set(out.answers) == {new_color}
    assert out.description == ("a", new_color, "car", "near", "a", new_color, "sign", ".")


def test_color_inversion_needs_color_question_and_color_in_description(make_triplet, config):
    wrong_type = make_triplet("what is red?", "a red car .", "red", question_type="what is")
    absent = make_triplet("what color is the car?", "a car .", "red", question_type="what color is the")

    assert color_invert(wrong_type, config, random.Random(0)) is None
    assert color_invert(absent, config, random.Random(0)) is None


# ========== ADVERSARIAL ========== #

def test_adversarial_one_sample_per_object(make_triplet, config, embeddings, graph):
    s = make_triplet("is there a dog?", "a dog sits near a car .", "yes", answer_type="yes/no")

    samples = adversarial_replace(s, config, embeddings, graph)

    by_id = {sample.question_id: sample for sample in samples}
    assert sorted(by_id) == ["1-adversarial-car", "1-adversarial-dog"]
    dog = by_id["1-adversarial-dog"]
    assert dog.description == ("a", "cat", "sits", "near", "a", "car", ".")
    assert dog.answers == ("no",) * 10
    car = by_id["1-adversarial-car"]
    assert car.description == ("a", "dog", "sits", "near", "a", "truck", ".")
    assert car.answers == ("yes",) * 10


def test_adversarial_object_not_asked_keeps_answers(make_triplet, config, embeddings):
    s = make_triplet("is there food?", "a pizza on a plate .", "yes", answer_type="yes/no")

    [sample] = adversarial_replace(s, config, embeddings)

    assert sample.description == ("a", "burger", "on", "a", "plate", ".")
    assert sample.answers == s.answers


def test_adversarial_question_mentioning_a_synonym_counts_as_asked(make_triplet, config, embeddings, graph):
    s = make_triplet("is there a puppy?", "a dog .", "yes", answer_type="yes/no")

    [sample] = adversarial_replace(s, config, embeddings, graph)

    assert sample.answers == ("no",) * 10


def test_adversarial_only_for_yes_no_answers(make_triplet, config, embeddings):
    s = make_triplet("what animal is it?", "a dog .", "dog")

    assert adversarial_replace(s, config, embeddings) == []


def test_adversarial_skip_no_majority(make_triplet, dav_lexicon, embeddings):
    s = make_triplet("is there a dog?", "a dog .", ["no"] * 6 + ["yes"] * 4, answer_type="yes/no")
    skipping = DavConfig(**dav_lexicon, skip_no_majority=True)

    assert adversarial_replace(s, skipping, embeddings) == []
    assert adversarial_replace(s, DavConfig(**dav_lexicon), embeddings)[0].answers == ("no",) * 10


def test_adversarial_out_of_vocabulary_object(make_triplet, config, embeddings):
    s = make_triplet("is it parked?", "a bus .", "yes", answer_type="yes/no")
    diagnostics = Diagnostics()

    assert adversarial_replace(s, config, embeddings, diagnostics=diagnostics) == []
    assert diagnostics.count("adversarial_oov") == 1


# ========== COUNTERFACTUAL ========== #

def test_question_type_prefix_is_protected(make_triplet, config, tmp_path):
    s = make_triplet("what color is the car", "a red car .", ["red"] * 6 + ["blue"] * 4,
                     question_type="what color is the")
    scorer = write_scores(tmp_path, {
        "question_id": 1,
        "question_scores": [0, 0, 0, 0, 0.9],
        "description_scores": [0, 0.9, 0.5, 0],
        "answer_scores": {"red": 0.9, "blue": 0.2},
    })

    out = css_question(s, scorer, replace(config, top_j=1))

    assert out.question == ("what", "color", "is", "the", "<mask>")
    assert out.answers == ("blue",) * 4
    assert out.description == s.description
    assert out.question_id == "1-css_question"


def test_description_masks_top_scored_words(make_triplet, dav_lexicon, tmp_path):
    s = make_triplet("what is it?", "a red car near a dog", ["car"] * 5 + ["dog"] * 5)
    scorer = write_scores(tmp_path, {
        "question_id": 1,
        "question_scores": [0, 0, 0],
        "description_scores": [0.1, 0.9, 0.5, 0.0, 0.1, 0.7],
        "answer_scores": {"car": 0.8, "dog": 0.3},
    })

    out = css_description(s, scorer, DavConfig(**dav_lexicon, top_d=2, top_j=1))

    assert out.description == ("a", "<mask>", "car", "near", "a", "<mask>")
    assert out.answers == ("dog",) * 5


def test_critical_positions_break_ties_by_position():
    assert critical_positions([0.5] * 6, range(6), 2) == [0, 1]
    assert critical_positions([0.1, 0.3, 0.3, 0.9], [1, 2, 3], 2) == [1, 3]
    assert critical_positions([0.2, 0.1], [0, 1], 10) == [0, 1]


def test_prefix_length():
    assert question_type_prefix_length(("What", "color", "is", "the", "car?"), "what color is the") == 4
    assert question_type_prefix_length(("Is", "it", "red?"), "what color") == 0


def test_counterfactual_without_remaining_answers(make_triplet, dav_lexicon, tmp_path):
    s = make_triplet("what is it?", "a red car", "car")
    scorer = write_scores(tmp_path, {
        "question_id": 1, "question_scores": [0, 0, 0], "description_scores": [0, 0, 1],
        "answer_scores": {"car": 1.0},
    })

    assert css_description(s, scorer, DavConfig(**dav_lexicon, top_j=1)) is None


def test_top_d_larger_than_candidates_masks_everything(make_triplet, dav_lexicon, tmp_path):
    s = make_triplet("what is it?", "a red car", ["car"] * 5 + ["bus"] * 5)
    scorer = write_scores(tmp_path, {
        "question_id": 1, "question_scores": [0, 0, 0], "description_scores": [0.2, 0.1, 0.3],
        "answer_scores": {"car": 1.0, "bus": 0.5},
    })

    out = css_description(s, scorer, DavConfig(**dav_lexicon, top_d=10, top_j=1))

    assert out.description == ("<mask>",) * 3
    assert out.answers == ("bus",) * 5


def test_scorer_failure_is_a_diagnostic(make_triplet, config):
    s = make_triplet("what is it?", "a red car", "car")
    diagnostics = Diagnostics()

    assert css_description(s, FailingScorer(), config, diagnostics) is None
    assert diagnostics.count("scorer_failure") == 1


def test_css_falls_back_to_the_other_branch(make_triplet, dav_lexicon, tmp_path):
    # the whole question is the question-type prefix, so only the description can be masked
    s = make_triplet("what color is the", "a red car", ["red"] * 5 + ["blue"] * 5, question_type="what color is the")
    scorer = write_scores(tmp_path, {
        "question_id": 1, "question_scores": [0, 0, 0, 0], "description_scores": [0, 1, 0],
        "answer_scores": {"red": 1.0, "blue": 0.1},
    })
    config = DavConfig(**dav_lexicon, top_d=1, top_j=1)

    for seed in range(8):
        out = css(s, scorer, config, random.Random(seed))
        assert out.origin == "css_description"
        assert out.description == ("a", "<mask>", "car")


# ========== RUNNER ========== #

def test_parse_techniques():
    assert parse_techniques("hypernym, hyponym,hypernym") == ["hypernym", "hyponym"]
    with pytest.raises(UsageError):
        parse_techniques("hypernym,mixup")
    with pytest.raises(UsageError):
        parse_techniques("")


def test_augment_needs_its_resources(make_triplet, config):
    s = make_triplet("is there a dog?", "a dog .", "yes", answer_type="yes/no")

    with pytest.raises(UsageError):
        augment(s, "adversarial", DavResources(config), seed=0)
    with pytest.raises(UsageError):
        augment(s, "css", DavResources(config), seed=0)


def test_synthetic_samples_are_not_augmented_again(make_triplet, config, graph):
    s = make_triplet("what is it?", "fruit .", "fruit")
    child = hypernym_replace(s, graph)

    assert augment(child, "hypernym", DavResources(config, graph=graph), seed=0) == []


def test_run_dav_replays_the_substitution_rule(make_triplet, config, graph):
    triplets = [
        make_triplet("what is it?", "a bowl of fruit .", "fruit", question_id=1),
        make_triplet("what is it?", "an apple on a plate .", "apple", question_id=2),
        make_triplet("what is it?", "a plate .", "fruit", question_id=3),
        make_triplet("what is it?", "fruit and more fruit", ["fruit"] * 8 + ["food", "apple"], question_id=4),
    ]

    synthetic, counts = run_dav(triplets, ["hypernym", "hyponym"], DavResources(config, graph=graph), 0,
                                progress=False)

    assert counts == {"hypernym": 2, "hyponym": 1}
    assert [s.question_id for s in synthetic] == ["1-hypernym", "1-hyponym", "2-hypernym"]
    originals = {t.question_id: t for t in triplets}
    for sample in synthetic:
        parent = originals[sample.parent_question_id]
        lookup = graph.hypernym_of if sample.origin == "hypernym" else graph.hyponym_of
        assert sample.question == parent.question
        assert len(sample.description) == len(parent.description)
        for before, after in zip(parent.description, sample.description):
            if before != after:
                assert token_core(after) == lookup(token_core(before))
                assert token_core(before) in {a.lower() for a in parent.answers}


# ========== REPLAY OVER A MIXED CORPUS ========== #

THINGS = ["dog", "car", "pizza", "cat", "truck"]
PALETTE = ["red", "blue", "green", "white"]
ALL_TECHNIQUES = ["hypernym", "hyponym", "color_inversion", "adversarial", "css_question", "css_description", "css"]


def yes_no_answers(rng):
    yes = rng.randint(3, 7)
    return ["yes"] * yes + ["no"] * (10 - yes)


def mixed_corpus(make_triplet):
    """50 originals covering color, yes/no object, synonym, fruit and open questions"""
    rng = random.Random(11)
    triplets = []
    for qid in range(1, 51):
        kind = qid % 5
        if kind == 0:
            color, thing = rng.choice(PALETTE), rng.choice(THINGS)
            answers = [color] * 7 + [rng.choice(PALETTE)] * 3
            t = make_triplet(f"what color is the {thing}?", f"a {color} {thing} near a tree .", answers,
                             question_type="what color is the", question_id=qid)
        elif kind == 1:
            thing, other = rng.sample(THINGS, 2)
            t = make_triplet(f"is there a {thing}?", f"a {thing} and a {other} on the street .",
                             yes_no_answers(rng), question_type="is there a", answer_type="yes/no", question_id=qid)
        elif kind == 2:
            question, question_type = [
                ("is it sunny?", "is it"), ("is there a puppy?", "is there a"), ("is the dog asleep?", "is the"),
            ][(qid // 5) % 3]
            t = make_triplet(question, "a dog sits in the sun .", yes_no_answers(rng),
                             question_type=question_type, answer_type="yes/no", question_id=qid)
        elif kind == 3:
            description, answers = [
                ("a bowl of fruit .", ["fruit"] * 9 + ["food"]),
                ("an apple on a plate .", ["apple"] * 6 + ["fruit"] * 4),
                ("fruit on a table .", "fruit"),
            ][(qid // 5) % 3]
            t = make_triplet("what is it?", description, answers, question_type="what is", question_id=qid)
        else:
            food = rng.choice(["pizza", "burger"])
            t = make_triplet("what is on the plate?", f"a {food} on a plate .", [food] * 6 + ["cake"] * 4,
                             question_type="what is on the", question_id=qid)
        triplets.append(t)
    return triplets


def lowered(answers):
    return {a.strip().lower() for a in answers}


def check_relation(parent, sample, graph):
    lookup = graph.hypernym_of if sample.origin == "hypernym" else graph.hyponym_of
    assert sample.question == parent.question
    assert len(sample.description) == len(parent.description)
    for before, after in zip(parent.description, sample.description):
        if before != after:
            assert token_core(after) == lookup(token_core(before))
            assert token_core(before) in lowered(parent.answers)


def check_color_inversion(parent, sample, config):
    assert parent.question_type in config.question_types.types
    assert sample.question == parent.question
    assert len(sample.description) == len(parent.description)
    changed = [(token_core(b), token_core(a)) for b, a in zip(parent.description, sample.description) if b != a]
    assert len({old for old, _ in changed}) == 1 and len({new for _, new in changed}) == 1
    old, new = changed[0]
    assert old in config.colors and new in config.colors and old != new
    assert old in lowered(parent.answers)
    assert sample.answers == tuple(new if a.strip().lower() == old else a for a in parent.answers)


def brute_force_adversary(word, excluded, table):
    target = table.vectors[table.index[word]].astype(np.float64)
    candidates = [w for w in table.vocabulary if w != word and w not in excluded]
    return min(candidates, key=lambda w: (
        float(np.linalg.norm(table.vectors[table.index[w]].astype(np.float64) - target)), table.index[w],
    ), default=None)


def check_adversarial(parent, sample, config, graph, table):
    name = str(sample.question_id).rsplit("-", 1)[1]
    assert lowered(parent.answers) & {"yes", "no"}
    synonyms = set(config.objects.synonyms_of(name)) | set(graph.synonyms_of(name))
    adversary = brute_force_adversary(name, synonyms | {name}, table)
    assert adversary is not None and adversary not in synonyms | {name}
    for before, after in zip(parent.description, sample.description):
        assert token_core(after) == (adversary if token_core(before) == name else token_core(before))
    asked = bool({token_core(t) for t in parent.question} & (synonyms | {name}))
    assert sample.answers == (("no",) * len(parent.answers) if asked else parent.answers)


def replay_counterfactual(parent, scorer, config, on_question):
    """(question, description, answers) the masking rule yields, or None"""
    tokens = parent.question if on_question else parent.description
    prefix = 0
    if on_question:
        for token, word in zip(parent.question, parent.question_type.split()):
            if token_core(token) != word:
                break
            prefix += 1
    candidates = list(range(prefix, len(tokens)))
    if not candidates:
        return None
    scores = scorer.score(parent.question, parent.description, parent.question_id, parent.answers)
    token_scores = scores.question_scores if on_question else scores.description_scores
    critical = set(sorted(candidates, key=lambda i: (-token_scores[i], i))[:config.top_d])
    rest = set(candidates) - critical
    assert critical | rest == set(candidates) and not critical & rest
    assert all(i >= prefix for i in critical)
    keep = tuple(MASK_TOKEN if i in rest else t for i, t in enumerate(tokens))
    cut = tuple(MASK_TOKEN if i in critical else t for i, t in enumerate(tokens))
    inputs = (keep, parent.description) if on_question else (parent.question, keep)
    answer_scores = scorer.score(*inputs, parent.question_id, parent.answers).answer_scores
    removed = sorted(set(parent.answers), key=lambda a: (-answer_scores[a], a))[:config.top_j]
    assert len(removed) <= config.top_j
    answers = tuple(a for a in parent.answers if a not in removed)
    if not answers:
        return None
    if on_question:
        return cut, parent.description, answers
    return parent.question, cut, answers


def test_every_technique_replays_over_a_mixed_corpus(make_triplet, dav_lexicon, graph, embeddings):
    triplets = mixed_corpus(make_triplet)
    config = DavConfig(**dav_lexicon, top_d=2, top_j=1)
    scorer = LexicalOverlapScorer(["a", "the", "is", "of", "on", "and", "there", "it", "what"])
    resources = DavResources(config, graph=graph, embeddings=embeddings, scorer=scorer)

    synthetic, counts = run_dav(triplets, ALL_TECHNIQUES, resources, 5, progress=False)

    for technique in ALL_TECHNIQUES[:-1]:
        assert counts[technique] > 0, technique
    originals = {t.question_id: t for t in triplets}
    by_id = {s.question_id: s for s in synthetic}
    for sample in synthetic:
        parent = originals[sample.parent_question_id]
        if sample.origin in ("hypernym", "hyponym"):
            check_relation(parent, sample, graph)
        elif sample.origin == "color_inversion":
            check_color_inversion(parent, sample, config)
        elif sample.origin == "adversarial":
            check_adversarial(parent, sample, config, graph, embeddings)

    for parent in triplets:
        yes_no = bool(lowered(parent.answers) & {"yes", "no"})
        expected = {f"{parent.question_id}-adversarial-{o}" for o in config.objects.classes
                    if yes_no and o in {token_core(t) for t in parent.description} and o in embeddings}
        assert {q for q in by_id if q.startswith(f"{parent.question_id}-adversarial-")} == expected
        for origin, on_question in (("css_question", True), ("css_description", False)):
            replayed = replay_counterfactual(parent, scorer, config, on_question)
            sample = by_id.get(f"{parent.question_id}-{origin}")
            if replayed is None:
                assert sample is None
            else:
                assert (sample.question, sample.description, sample.answers) == replayed

    css_only, css_counts = run_dav(triplets, ["css"], resources, 5, progress=False)
    assert css_counts["css"] == len(css_only)
    assert {s.parent_question_id for s in css_only} == {
        s.parent_question_id for s in synthetic if s.origin in ("css_question", "css_description")
    }
    for sample in css_only:
        assert sample == by_id[sample.question_id]
