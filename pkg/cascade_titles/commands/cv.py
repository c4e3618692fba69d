"""Implementation of the cv command: k-fold cross-validation of the coarse stage"""

from __future__ import annotations

import sys
from typing import TYPE_CHECKING

from panpath import PanPath

from ..cascade import gold_group, load_pipeline, train_cascade
from ..config import settings_from_args
from ..corpus import load_jsonl
from ..evaluation import cross_validate, dumps_report, format_cv_report
from ..utils import EXIT_DATA, CascadeTitlesError, fail, setup_logging

if TYPE_CHECKING:
    from argx import Namespace


async def run(args: Namespace) -> None:
    """Cross-validate the cascade on labelled postings

    Args:
        args: Parsed command line arguments
    """
    setup_logging(getattr(args, "verbose", False))
    try:
        settings = settings_from_args(
            args,
            folds=getattr(args, "folds", None),
            k=getattr(args, "k", None),
            stratified=True if getattr(args, "stratified", False) else None,
        )
        pipeline = await load_pipeline(settings)
        docs = await load_jsonl(args.input)

        def trainer(train_set):
            model = train_cascade(train_set, settings, pipeline)

            def predictor(doc):
                prediction = model.classify(doc)
                return None if prediction.abstained else prediction.coarse_group

            return predictor

        report = cross_validate(
            docs,
            trainer,
            k=settings.folds,
            seed=settings.seed,
            gold=lambda doc: gold_group(doc, settings.aliases),
            stratified=settings.stratified,
        )
        if getattr(args, "output", None):
            await PanPath(args.output).a_write_text(dumps_report(report))
    except FileNotFoundError as e:
        fail("cv", f"cannot read '{e.filename or args.input}': No such file")
    except (CascadeTitlesError, OSError) as e:
        fail("cv", e)

    print(format_cv_report(report))
    if not report.valid:
        sys.exit(EXIT_DATA)
