"""Knowledge-base completion for quantified generic facts.

Facts are (source, relation, target) triples labeled with a quantifier
(all / some / none).  The package trains holographic embeddings over
such a knowledge base, propagates labels through a taxonomy, proposes
annotation queries for new entities, and bounds the precision of ranked
predictions with a frugal annotation budget.
"""

from __future__ import annotations

from .kb import (
    Background,
    DatasetSplit,
    KBError,
    KnowledgeBase,
    QuantLabel,
    Schema,
    Taxonomy,
    Triple,
    TypeMap,
    load_background,
    load_kb,
    save_kb,
    split_kb,
)

__version__ = "0.1.0"

__all__ = [
    "Background",
    "DatasetSplit",
    "KBError",
    "KnowledgeBase",
    "QuantLabel",
    "Schema",
    "Taxonomy",
    "Triple",
    "TypeMap",
    "load_background",
    "load_kb",
    "save_kb",
    "split_kb",
    "__version__",
]
