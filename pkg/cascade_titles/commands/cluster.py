"""Implementation of the cluster command: title clusters and a flat proximity model"""

from __future__ import annotations

from typing import TYPE_CHECKING

from ..cascade import load_pipeline, train_flat
from ..config import settings_from_args
from ..corpus import load_jsonl
from ..utils import CascadeTitlesError, fail, logger, setup_logging

if TYPE_CHECKING:
    from argx import Namespace


async def run(args: Namespace) -> None:
    """Cluster the titles of a corpus and write a flat proximity model

    Args:
        args: Parsed command line arguments
    """
    setup_logging(getattr(args, "verbose", False))
    try:
        settings = settings_from_args(args)
        pipeline = await load_pipeline(settings)
        docs = await load_jsonl(args.input)
        logger.debug("loaded %d documents from %s", len(docs), args.input)
        model = train_flat(docs, settings, pipeline)
        await model.save(args.output)
    except FileNotFoundError as e:
        fail("cluster", f"cannot read '{e.filename or args.input}': No such file")
    except (CascadeTitlesError, OSError) as e:
        fail("cluster", e)

    print(f"{len(model.clusters)} clusters")
    print(
        f"{len(model.clusters.member_ids)} documents assigned, "
        f"{len(model.clusters.other_bucket)} unassigned"
    )
    for bucket, count in model.clusters.size_histogram():
        if count:
            print(f"size {bucket}\t{count}")
