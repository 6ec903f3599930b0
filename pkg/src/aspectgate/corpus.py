"""SemEval-2014 task-4 corpus handling.

Parses the aspect-term XML, tokenizes with character alignment, groups
each sentence's aspects into per-target instances, reports the class /
single-aspect / multi-aspect distribution, and builds the vocabulary and
embedding matrix from a GloVe-format text file.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Fixed class order; argmax ties resolve to the lowest index.
CLASSES = ("neutral", "negative", "positive")
CLASS_INDEX = {label: i for i, label in enumerate(CLASSES)}

EMBED_DIM = 300
OOV_SCALE = 0.1  # unseen tokens get uniform [-0.1, 0.1] entries

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class DataError(Exception):
    """Malformed or missing input data (XML, embedding files, checkpoints)."""


@dataclass
class AspectSpan:
    term: str
    char_start: int
    char_end: int
    tok_start: int  # 0-based index into the sentence tokens
    tok_len: int
    polarity: str | None  # one of CLASSES; None only for inference-time spans


@dataclass
class SentenceRecord:
    id: str
    text: str
    tokens: list
    aspects: list

    @property
    def n(self):
        return len(self.tokens)

    def is_multi_aspect(self):
        return len(self.aspects) > 1


@dataclass
class AspectGroup:
    """One prediction instance: a sentence, a target aspect, its neighbors."""

    sentence: SentenceRecord
    target_index: int
    neighbor_indices: tuple

    @property
    def target(self):
        return self.sentence.aspects[self.target_index]

    @property
    def neighbors(self):
        return [self.sentence.aspects[i] for i in self.neighbor_indices]

    @property
    def m(self):
        return len(self.neighbor_indices)


@dataclass
class ParseResult:
    records: list = field(default_factory=list)
    conflict_aspects: int = 0
    offset_mismatches: int = 0
    unaligned_aspects: int = 0
    duplicate_spans: int = 0
    dropped_sentences: int = 0


def tokenize(text):
    """Lowercased tokens plus their character spans.

    Splits on whitespace and punctuation boundaries; punctuation marks
    become their own tokens.
    """
    tokens, spans = [], []
    for m in _TOKEN_RE.finditer(text):
        tokens.append(m.group(0).lower())
        spans.append((m.start(), m.end()))
    return tokens, spans


def align_span(spans, char_start, char_end):
    """Minimal token range covering a character span, or None.

    A token is covered when it overlaps the span at all, so a span ending
    mid-token extends to the whole token.
    """
    hit = [i for i, (s, e) in enumerate(spans) if s < char_end and e > char_start]
    if not hit:
        return None
    return hit[0], hit[-1] - hit[0] + 1


def tokenize_and_align(sentence_id, text, raw_aspects, result=None):
    """Build a SentenceRecord from raw text and (term, polarity, from, to) tuples.

    Aspects whose character span covers no token are skipped (counted on
    ``result``); returns None when no aspect survives.
    """
    stats = result if result is not None else ParseResult()
    tokens, spans = tokenize(text)
    if not tokens:
        return None
    aspects = []
    for term, polarity, char_start, char_end in raw_aspects:
        aligned = align_span(spans, char_start, char_end)
        if aligned is None:
            stats.unaligned_aspects += 1
            continue
        tok_start, tok_len = aligned
        aspects.append(AspectSpan(term=term, char_start=char_start, char_end=char_end,
                                  tok_start=tok_start, tok_len=tok_len, polarity=polarity))
    if not aspects:
        return None
    aspects.sort(key=lambda a: (a.char_start, a.char_end))
    deduped = []
    for a in aspects:
        if deduped and (a.char_start, a.char_end) == (deduped[-1].char_start, deduped[-1].char_end):
            stats.duplicate_spans += 1
            continue
        deduped.append(a)
    return SentenceRecord(id=sentence_id, text=text, tokens=tokens, aspects=deduped)


def parse_semeval_xml(path):
    """Parse a SemEval-2014 task-4 aspect-term file.

    Conflict-labeled aspects are dropped; aspects whose from/to offsets do
    not reproduce the term string are skipped with a counter; sentences
    left without aspects are discarded.  Returns a ParseResult whose
    ``records`` hold the surviving sentences in file order.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    try:
        tree = ET.parse(str(path))
    except ET.ParseError as exc:
        raise DataError(f"malformed XML in {path} (line {exc.position[0]}): {exc}") from exc

    result = ParseResult()
    for sent in tree.getroot().iter("sentence"):
        sid = sent.get("id", "")
        text_el = sent.find("text")
        text = text_el.text if text_el is not None and text_el.text else ""
        raw = []
        terms_el = sent.find("aspectTerms")
        for term_el in terms_el.findall("aspectTerm") if terms_el is not None else []:
            term = term_el.get("term", "")
            polarity = term_el.get("polarity", "")
            if polarity == "conflict":
                result.conflict_aspects += 1
                continue
            if polarity not in CLASS_INDEX:
                raise DataError(f"{path}: sentence {sid}: unknown polarity {polarity!r}")
            try:
                char_start = int(term_el.get("from"))
                char_end = int(term_el.get("to"))
            except (TypeError, ValueError):
                raise DataError(f"{path}: sentence {sid}: bad from/to offsets") from None
            if text[char_start:char_end] != term:
                result.offset_mismatches += 1
                continue
            raw.append((term, polarity, char_start, char_end))
        if not raw:
            result.dropped_sentences += 1
            continue
        record = tokenize_and_align(sid, text, raw, result)
        if record is None:
            result.dropped_sentences += 1
            continue
        result.records.append(record)
    return result


def make_aspect_groups(records):
    """One AspectGroup per aspect occurrence, neighbors in textual order."""
    groups = []
    for record in records:
        k = len(record.aspects)
        for t in range(k):
            neighbors = tuple(i for i in range(k) if i != t)
            groups.append(AspectGroup(sentence=record, target_index=t,
                                      neighbor_indices=neighbors))
    return groups


# ---------------------------------------------------------------------------
# Distribution statistics
# ---------------------------------------------------------------------------

@dataclass
class DatasetStats:
    """Aspect counts by class and single-aspect / multi-aspect membership."""

    counts: dict = field(default_factory=dict)

    def cell(self, label, bucket):
        return self.counts.get((label, bucket), 0)

    @property
    def total(self):
        return sum(self.counts.values())

    def as_dict(self):
        return {label: {"sa": self.cell(label, "sa"), "ma": self.cell(label, "ma")}
                for label in CLASSES}


def dataset_stats(records):
    """An aspect counts as SA iff its sentence has exactly one aspect."""
    stats = DatasetStats()
    for record in records:
        bucket = "ma" if record.is_multi_aspect() else "sa"
        for aspect in record.aspects:
            key = (aspect.polarity, bucket)
            stats.counts[key] = stats.counts.get(key, 0) + 1
    return stats


def render_stats(stats_by_split):
    """Aligned text table plus CSV (header ``class,split,sa,ma``)."""
    order = ("positive", "negative", "neutral")
    width = 8
    head1 = " " * 10 + "".join(f"{label.capitalize():<{2 * width}}" for label in order)
    head2 = " " * 10 + "".join(f"{'SA':<{width}}{'MA':<{width}}" for _ in order)
    lines = [head1, head2]
    for split, stats in stats_by_split.items():
        row = f"{split:<10}"
        for label in order:
            row += f"{stats.cell(label, 'sa'):<{width}}{stats.cell(label, 'ma'):<{width}}"
        lines.append(row.rstrip())
    text = "\n".join(lines)

    csv_lines = ["class,split,sa,ma"]
    for label in order:
        for split, stats in stats_by_split.items():
            csv_lines.append(f"{label},{split},{stats.cell(label, 'sa')},{stats.cell(label, 'ma')}")
    return text, "\n".join(csv_lines) + "\n"


# ---------------------------------------------------------------------------
# Vocabulary and embeddings
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingTable:
    """Token-to-row vocabulary plus the embedding matrix.

    Row 0 is reserved as the zero padding/unknown vector; every vocabulary
    token maps to a row >= 1.  Tokens missing from the embedding file are
    initialized uniformly in [-0.1, 0.1] from a per-token seeded stream, so
    the vectors do not depend on vocabulary order.
    """

    vocabulary: dict
    matrix: np.ndarray
    oov_tokens: tuple = ()
    skipped_lines: int = 0
    oov_policy: str = f"uniform[-{OOV_SCALE}, {OOV_SCALE}], seeded per token"

    @property
    def dim(self):
        return self.matrix.shape[1]

    @property
    def oov_rate(self):
        if not self.vocabulary:
            return 0.0
        return len(self.oov_tokens) / len(self.vocabulary)

    def lookup(self, token):
        return self.vocabulary.get(token, 0)


def _collect_vocabulary(records):
    vocab = {}
    for record in records:
        for token in record.tokens:
            if token not in vocab:
                vocab[token] = len(vocab) + 1  # row 0 stays reserved
    return vocab


def _oov_vector(token, seed, dim):
    token_seed = (seed + zlib.crc32(token.encode("utf-8"))) & 0xFFFFFFFF
    rng = np.random.RandomState(token_seed)
    return rng.uniform(-OOV_SCALE, OOV_SCALE, dim).astype(np.float32)


def build_embeddings(records, glove_path, seed, dim=EMBED_DIM):
    """Vocabulary over all records plus a matrix seeded from a GloVe file.

    Lines whose field count is not ``1 + dim`` are skipped and counted.
    """
    path = Path(glove_path)
    if not path.exists():
        raise DataError(f"no such embedding file: {path}")
    vocab = _collect_vocabulary(records)
    wanted = set(vocab)
    found = {}
    skipped = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                skipped += 1
                continue
            token = parts[0]
            if token in wanted and token not in found:
                found[token] = np.asarray(parts[1:], dtype=np.float32)
    matrix = np.zeros((len(vocab) + 1, dim), dtype=np.float32)
    oov = []
    for token, idx in vocab.items():
        vec = found.get(token)
        if vec is None:
            vec = _oov_vector(token, seed, dim)
            oov.append(token)
        matrix[idx] = vec
    return EmbeddingTable(vocabulary=vocab, matrix=matrix,
                          oov_tokens=tuple(oov), skipped_lines=skipped)


def build_random_table(records, seed, dim=EMBED_DIM):
    """Embedding table with every token on the unseen-token policy."""
    vocab = _collect_vocabulary(records)
    matrix = np.zeros((len(vocab) + 1, dim), dtype=np.float32)
    for token, idx in vocab.items():
        matrix[idx] = _oov_vector(token, seed, dim)
    return EmbeddingTable(vocabulary=vocab, matrix=matrix, oov_tokens=tuple(vocab))
