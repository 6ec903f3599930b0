"""Shared builders for synthetic corpora and SemEval-format XML."""

from __future__ import annotations

import fnmatch
import os
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from aspectgate.corpus import tokenize_and_align


def locate_spans(text, terms):
    """Non-overlapping (term, from, to) triples, located left to right."""
    spans = []
    cursor = 0
    for term in terms:
        start = text.index(term, cursor)
        spans.append((term, start, start + len(term)))
        cursor = start + len(term)
    return spans


def make_record(text, aspects, sentence_id="s"):
    """SentenceRecord from text plus (term, polarity) pairs in textual order."""
    raw = [(term, polarity, start, end)
           for (term, start, end), (_, polarity)
           in zip(locate_spans(text, [t for t, _ in aspects]), aspects)]
    record = tokenize_and_align(sentence_id, text, raw)
    assert record is not None
    return record


def build_xml(sentences):
    """SemEval-2014 task-4 aspect-term XML for (text, [(term, polarity)]) pairs."""
    lines = ["<?xml version='1.0' encoding='UTF-8'?>", "<sentences>"]
    for i, (text, aspects) in enumerate(sentences):
        lines.append(f'    <sentence id="{i}">')
        lines.append(f"        <text>{escape(text)}</text>")
        if aspects:
            lines.append("        <aspectTerms>")
            for (term, start, end), (_, polarity) in zip(
                    locate_spans(text, [t for t, _ in aspects]), aspects):
                lines.append(
                    f"            <aspectTerm term={quoteattr(term)} "
                    f"polarity={quoteattr(polarity)} from=\"{start}\" to=\"{end}\"/>")
            lines.append("        </aspectTerms>")
        lines.append("    </sentence>")
    lines.append("</sentences>")
    return "\n".join(lines) + "\n"


TOY_SENTENCES = [
    ("the pizza was great .", [("pizza", "positive")]),
    ("the soup was awful .", [("soup", "negative")]),
    ("the menu lists the daily specials .", [("menu", "neutral")]),
    ("our waiter was fantastic .", [("waiter", "positive")]),
    ("the battery died fast .", [("battery", "negative")]),
    ("the keyboard felt ordinary .", [("keyboard", "neutral")]),
    ("the wine impressed everyone .", [("wine", "positive")]),
    ("the dessert tasted stale .", [("dessert", "negative")]),
    ("the receipt shows the price .", [("receipt", "neutral")]),
    ("the staff were friendly .", [("staff", "positive")]),
    ("the fan rattled loudly .", [("fan", "negative")]),
    ("the manual describes the setup .", [("manual", "neutral")]),
    # mixed-label sentences carry three aspects: with only two, the
    # singleton gate softmax makes the fused target representation
    # symmetric in the pair, so opposite labels cannot both be fit
    ("the screen was great but the speakers were awful and the price stayed ordinary .",
     [("screen", "positive"), ("speakers", "negative"), ("price", "neutral")]),
    ("the service was slow , the food was amazing , and the crowd was loud .",
     [("service", "negative"), ("food", "positive"), ("crowd", "negative")]),
    ("the salad was fresh and the bread was warm .",
     [("salad", "positive"), ("bread", "positive")]),
    ("the mouse was broken and the cable was frayed .",
     [("mouse", "negative"), ("cable", "negative")]),
    ("the brunch menu changed while the dinner menu stayed ordinary .",
     [("brunch menu", "neutral"), ("dinner menu", "neutral")]),
    ("the ram upgrade was great while the screen stayed ordinary and the cost was awful .",
     [("ram upgrade", "positive"), ("screen", "neutral"), ("cost", "negative")]),
    ("the coffee was superb but the cake was dry and the tea stayed ordinary .",
     [("coffee", "positive"), ("cake", "negative"), ("tea", "neutral")]),
    ("the charger works while the case looks cheap and the box was great .",
     [("charger", "neutral"), ("case", "negative"), ("box", "positive")]),
]


def semeval_path(domain, split):
    """Locate a real SemEval-2014 file under SEMEVAL_DATA_DIR, if any."""
    root = os.environ.get("SEMEVAL_DATA_DIR")
    if not root or not Path(root).is_dir():
        return None
    names = sorted(p for p in Path(root).rglob("*.xml"))
    patterns = ([f"{domain}*{split}*gold*.xml", f"{domain}*{split}*.xml"]
                if split == "test" else [f"{domain}*{split}*.xml"])
    for pattern in patterns:
        for path in names:
            if fnmatch.fnmatch(path.name.lower(), pattern):
                return path
    return None


def glove_path():
    path = os.environ.get("SEMEVAL_GLOVE")
    return Path(path) if path and Path(path).is_file() else None
