"""Implementation of the classify command for postings or a single title"""

from __future__ import annotations

import sys
from typing import TYPE_CHECKING

from panpath import PanPath

from ..cascade import CascadePrediction, load_model
from ..corpus import Document, DocumentSet, load_jsonl
from ..utils import CascadeTitlesError, fail, format_score, setup_logging

if TYPE_CHECKING:
    from argx import Namespace


def format_prediction(doc_id: str, prediction: CascadePrediction) -> str:
    """id, group, label:score|..., abstained; tab separated"""
    fine = "|".join(
        f"{label}:{format_score(score)}" for label, score in prediction.fine_titles
    )
    return "\t".join(
        [
            doc_id,
            prediction.coarse_group or "-",
            fine or "-",
            str(int(prediction.abstained)),
        ]
    )


async def run(args: Namespace) -> None:
    """Classify postings with a cascade or flat proximity model

    Args:
        args: Parsed command line arguments
    """
    setup_logging(getattr(args, "verbose", False))
    title = getattr(args, "title", None)
    if title is None and not args.input:
        fail("classify", "either INPUT or --title is required", 2)
    if title is not None and args.input:
        fail("classify", "INPUT and --title are mutually exclusive", 2)

    try:
        model = await load_model(args.model)
        if title is not None:
            docs = DocumentSet.from_documents([Document("-", title)])
        else:
            docs = await load_jsonl(args.input)
        k = getattr(args, "k", None)
        lines = [format_prediction(doc.id, model.classify(doc, k)) for doc in docs]
        if getattr(args, "output", None):
            await PanPath(args.output).a_write_text(
                "".join(f"{line}\n" for line in lines)
            )
    except FileNotFoundError as e:
        fail("classify", f"cannot read '{e.filename or args.input}': No such file")
    except (CascadeTitlesError, OSError) as e:
        fail("classify", e)

    if not getattr(args, "output", None):
        for line in lines:
            sys.stdout.write(f"{line}\n")
