import json

import pytest

from lexicon import load_color_set, load_embeddings, load_lexical_graph, load_object_classes, load_question_types
from triplet_builder import Triplet

LEXICON_LINES = [
    "fruit\thypernym\tfood",
    "fruit\thyponym\tapple",
    "fruit\thyponym\tberry",
    "apple\thypernym\tfruit",
    "dog\tsynonym\tpuppy",
    "dog\tsynonym\tdoggy",
    "dog\thypernym\tanimal",
    "car\tsynonym\tautomobile",
    "giraffe\tsynonym\tcamelopard",
]

EMBEDDING_LINES = [
    "dog 1.0 0.0 0.0",
    "puppy 1.02 0.0 0.0",
    "cat 1.1 0.0 0.0",
    "pizza 0.0 1.0 0.0",
    "burger 0.0 1.2 0.0",
    "car 0.0 0.0 1.0",
    "truck 0.0 0.0 1.1",
    "tree 5.0 5.0 5.0",
]


def _answers(answers):
    if isinstance(answers, str):
        return (answers,) * 10
    return tuple(answers)


@pytest.fixture
def make_triplet():
    def factory(question, description, answers, question_type="what is", answer_type="other", question_id=1):
        return Triplet(
            question_id=question_id,
            question=tuple(question.split()),
            description=tuple(description.split()),
            answers=_answers(answers),
            question_type=question_type,
            answer_type=answer_type,
        )
    return factory


@pytest.fixture
def lexicon_path(tmp_path):
    path = tmp_path / "lexicon.tsv"
    path.write_text("\n".join(LEXICON_LINES) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture
def graph(lexicon_path):
    return load_lexical_graph(lexicon_path)


@pytest.fixture
def embeddings_path(tmp_path):
    path = tmp_path / "vectors.txt"
    path.write_text("\n".join(EMBEDDING_LINES) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture
def embeddings(embeddings_path):
    return load_embeddings(embeddings_path)


@pytest.fixture
def dav_lexicon(graph):
    """Default colors, color question types and COCO classes"""
    return {
        "colors": load_color_set(),
        "question_types": load_question_types(),
        "objects": load_object_classes(graph=graph),
    }


def annotation(question_id, image_id, answers, question_type="what is", answer_type="other"):
    return {
        "question_id": question_id,
        "image_id": image_id,
        "question_type": question_type,
        "answer_type": answer_type,
        "multiple_choice_answer": _answers(answers)[0],
        "answers": [
            {"answer": answer, "answer_confidence": "yes", "answer_id": i + 1}
            for i, answer in enumerate(_answers(answers))
        ],
    }


@pytest.fixture
def corpus(tmp_path):
    """Small VQA/COCO/narrative corpus

    question 4 has no narrative, question 5 no captions, question 6 no annotation."""
    questions = {"questions": [
        {"question_id": 1, "image_id": 100, "question": "What color is the car?"},
        {"question_id": 2, "image_id": 100, "question": "Is there a dog?"},
        {"question_id": 3, "image_id": 200, "question": "What is on the plate?"},
        {"question_id": 4, "image_id": 300, "question": "What is on the table?"},
        {"question_id": 5, "image_id": 400, "question": "What sport is this?"},
        {"question_id": 6, "image_id": 100, "question": "Is it raining?"},
    ]}
    annotations = {"annotations": [
        annotation(1, 100, "red", "what color is the"),
        annotation(2, 100, "yes", "is there a", "yes/no"),
        annotation(3, 200, ["fruit"] * 6 + ["banana"] * 4, "what is on the"),
        annotation(4, 300, "book", "what is on the"),
        annotation(5, 400, "tennis", "what sport is"),
    ]}
    captions = {"annotations": [
        {"image_id": 100, "id": 15, "caption": "A dog sits by a red car."},
        {"image_id": 100, "id": 11, "caption": "A red car parked near a dog."},
        {"image_id": 100, "id": 13, "caption": "A car on the street."},
        {"image_id": 100, "id": 12, "caption": "The dog looks at the car."},
        {"image_id": 100, "id": 14, "caption": "A small dog and a red car."},
        {"image_id": 100, "id": 16, "caption": "A sixth caption."},
        {"image_id": 200, "id": 21, "caption": "A plate with fruit on it."},
        {"image_id": 200, "id": 22, "caption": "Some fruit on a white plate."},
        {"image_id": 200, "id": 23, "caption": "A bowl of fruit."},
        {"image_id": 300, "id": 31, "caption": "A book on a table."},
    ]}
    narratives = [
        {"image_id": "100", "caption": "In this image I can see a red car. There is a dog near the car."},
        {"image_id": "200", "caption": "In this picture there is fruit on a plate. The plate is white."},
    ]
    paths = {
        "questions": tmp_path / "questions.json",
        "annotations": tmp_path / "annotations.json",
        "captions": tmp_path / "captions.json",
        "narratives": tmp_path / "narratives.jsonl",
    }
    paths["questions"].write_text(json.dumps(questions), encoding="utf-8")
    paths["annotations"].write_text(json.dumps(annotations), encoding="utf-8")
    paths["captions"].write_text(json.dumps(captions), encoding="utf-8")
    paths["narratives"].write_text("\n".join(json.dumps(n) for n in narratives) + "\n", encoding="utf-8")
    return {name: str(path) for name, path in paths.items()}
