"""Tokenizer and vocabulary behavior."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fetchground.errors import DataFormatError
from fetchground.text import (PAD, PAD_ID, UNK, UNK_ID, Vocabulary,
                              detokenize, tokenize, words)


@pytest.fixture
def vocab():
    return Vocabulary(["take", "the", "red", "box", "bring", "me", "yellow"])


def test_basic_tokenize(vocab):
    ids = tokenize("Take the red box", vocab)
    assert ids == [vocab.id_of["take"], vocab.id_of["the"],
                   vocab.id_of["red"], vocab.id_of["box"]]


def test_punctuation_stripped(vocab):
    assert tokenize("Bring me the yellow box.", vocab) == \
        tokenize("bring me the yellow box", vocab)


def test_oov_maps_to_unk(vocab):
    assert tokenize("zorp", vocab) == [UNK_ID]


def test_empty_text_yields_unk(vocab):
    assert tokenize("", vocab) == [UNK_ID]
    assert tokenize("...", vocab) == [UNK_ID]


def test_reserved_ids(vocab):
    assert vocab.tokens[PAD_ID] == PAD
    assert vocab.tokens[UNK_ID] == UNK
    assert len(set(vocab.id_of.values())) == len(vocab)


def test_detokenize_roundtrip(vocab):
    text = "take the red box"
    assert detokenize(tokenize(text, vocab), vocab) == text


@given(st.lists(st.sampled_from(["take", "the", "red", "box", "me"]),
                min_size=1, max_size=10))
def test_roundtrip_property(seq):
    vocab = Vocabulary(["take", "the", "red", "box", "bring", "me"])
    text = " ".join(seq)
    assert detokenize(tokenize(text, vocab), vocab) == text


def test_file_roundtrip(tmp_path, vocab):
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    back = Vocabulary.load(path)
    assert back.tokens == vocab.tokens
    assert back.id_of == vocab.id_of


def test_load_rejects_missing_reserved(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("take\nthe\n")
    with pytest.raises(DataFormatError):
        Vocabulary.load(path)


def test_words_splits_and_lowercases():
    assert words("Pick-up THE  red, box!") == ["pick", "up", "the", "red", "box"]
