"""Implementation of the evaluate command: coarse and fine metrics of a cascade"""

from __future__ import annotations

from typing import TYPE_CHECKING

from panpath import PanPath

from ..cascade import CascadeModel, gold_group, load_model, resolve_group
from ..corpus import DocumentSet, load_jsonl, load_reference
from ..evaluation import (
    agreement,
    confusion_counts,
    dumps_report,
    format_report,
    macro_metrics,
    multilabel_losses,
)
from ..utils import CascadeTitlesError, ValidationError, fail, setup_logging

if TYPE_CHECKING:
    from argx import Namespace


def fine_label_sets(model: CascadeModel, docs: DocumentSet, predictions):
    """Predicted and gold label sets over every vertical label.

    A label belongs to a posting's gold set when it is one of the
    unigram/bigram terms of one of its gold titles.
    """
    universe = sorted(
        {label for v in model.verticals.values() for label in v.clusters.labels}
    )
    pred_sets, gold_sets = [], []
    for doc, prediction in zip(docs, predictions):
        terms = {
            term
            for title in doc.gold_titles or ()
            for term in model.pipeline.terms(title).terms
        }
        gold_sets.append({label for label in universe if label in terms})
        pred_sets.append({label for label, _ in prediction.fine_titles})
    return pred_sets, gold_sets, universe


async def run(args: Namespace) -> None:
    """Evaluate a cascade model on labelled postings

    Args:
        args: Parsed command line arguments
    """
    setup_logging(getattr(args, "verbose", False))
    reference_path = getattr(args, "reference", None)
    try:
        model = await load_model(args.model)
        if not isinstance(model, CascadeModel):
            raise ValidationError(
                f"{args.model} is a flat proximity model, evaluate needs a cascade"
            )
        docs = (await load_jsonl(args.input)).labeled
        k = getattr(args, "k", None)
        predictions = [model.classify(doc, k) for doc in docs]
        report = macro_metrics(
            confusion_counts(
                [None if p.abstained else p.coarse_group for p in predictions],
                [gold_group(doc, model.aliases) for doc in docs],
            )
        )

        if any(doc.gold_titles is not None for doc in docs):
            titled = [
                (doc, p) for doc, p in zip(docs, predictions) if doc.gold_titles
            ]
            pred_sets, gold_sets, universe = fine_label_sets(
                model, [doc for doc, _ in titled], [p for _, p in titled]
            )
            if universe:
                hamming, zero_one = multilabel_losses(pred_sets, gold_sets, universe)
                report = report.with_extras(
                    hamming_loss=hamming, zero_one_loss=zero_one
                )

        if reference_path:
            reference = await load_reference(reference_path)
            pairs = [
                (p.coarse_group, resolve_group(reference[doc.id].major, model.aliases))
                for doc, p in zip(docs, predictions)
                if doc.id in reference
            ]
            report = report.with_extras(
                agreement=agreement([a for a, _ in pairs], [b for _, b in pairs])
            )

        if getattr(args, "output", None):
            await PanPath(args.output).a_write_text(dumps_report(report))
    except FileNotFoundError as e:
        fail("evaluate", f"cannot read '{e.filename or args.input}': No such file")
    except (CascadeTitlesError, OSError) as e:
        fail("evaluate", e)

    print(format_report(report))
