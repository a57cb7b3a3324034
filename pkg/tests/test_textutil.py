"""Tokenizer, sentence splitter, and trigram hashing."""

import hashlib
import random
import string

from finsage.textutil import char_trigrams, sentence_spans, stable_bucket, tokenize


def test_tokenize_lowercases_and_keeps_alnum_runs():
    assert tokenize("Revenue grew 12% in FY-2024!") == ["revenue", "grew", "12", "in", "fy", "2024"]


def test_tokenize_empty_and_punctuation_only():
    assert tokenize("") == []
    assert tokenize("--- !!! ...") == []


def test_sentence_spans_basic():
    text = "Revenue grew. Margins fell? Costs rose; debt shrank."
    spans = sentence_spans(text)
    assert [text[a:b] for a, b in spans] == [
        "Revenue grew.",
        "Margins fell?",
        "Costs rose;",
        "debt shrank.",
    ]


def test_sentence_spans_no_boundary_is_single_span():
    text = "no terminal punctuation here"
    assert sentence_spans(text) == [(0, len(text))]


def test_sentence_spans_whitespace_only_is_empty():
    assert sentence_spans("   \n\t  ") == []
    assert sentence_spans("") == []


def test_sentence_spans_trim_surrounding_whitespace():
    text = "  First one.   Second one.  "
    spans = sentence_spans(text)
    pieces = [text[a:b] for a, b in spans]
    assert pieces == ["First one.", "Second one."]
    for piece in pieces:
        assert piece == piece.strip()


def test_sentence_spans_decimal_numbers_do_not_split():
    # boundary needs trailing whitespace, so 3.14 stays intact
    text = "Margin was 3.14 percent. Good."
    spans = sentence_spans(text)
    assert [text[a:b] for a, b in spans] == ["Margin was 3.14 percent.", "Good."]


def test_sentence_spans_partition_random_texts():
    """Spans are ordered, non-overlapping, and lose nothing but whitespace."""
    rng = random.Random(20240515)
    alphabet = string.ascii_letters + string.digits + " .?!;\n\t"
    for _ in range(200):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 120)))
        spans = sentence_spans(text)
        prev_end = 0
        for start, end in spans:
            assert prev_end <= start < end <= len(text)
            # trimmed: no whitespace at either edge of a span
            assert not text[start].isspace()
            assert not text[end - 1].isspace()
            # gaps between spans hold only whitespace
            assert text[prev_end:start].strip() == ""
            prev_end = end
        assert text[prev_end:].strip() == ""
        rebuilt = [word for a, b in spans for word in text[a:b].split()]
        assert rebuilt == text.split()


def test_char_trigrams_short_text_is_identity():
    assert char_trigrams("ab") == ["ab"]
    assert char_trigrams("x") == ["x"]


def test_char_trigrams_sliding_window():
    assert char_trigrams("abcd") == ["abc", "bcd"]
    assert len(char_trigrams("hello world")) == len("hello world") - 2


def test_stable_bucket_range_and_determinism():
    for gram in ("abc", "he ", " wo", "9z!"):
        b1 = stable_bucket(gram, 64)
        b2 = stable_bucket(gram, 64)
        assert b1 == b2
        assert 0 <= b1 < 64


def test_stable_bucket_matches_blake2b():
    digest = hashlib.blake2b("abc".encode("utf-8"), digest_size=8).digest()
    assert stable_bucket("abc", 64) == int.from_bytes(digest, "big") % 64
