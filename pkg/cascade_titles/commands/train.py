"""Implementation of the train command: the coarse SVM and its per-group verticals"""

from __future__ import annotations

from typing import TYPE_CHECKING

from ..cascade import group_title, load_pipeline, train_cascade
from ..config import settings_from_args
from ..corpus import load_jsonl
from ..utils import CascadeTitlesError, fail, logger, setup_logging

if TYPE_CHECKING:
    from argx import Namespace


async def run(args: Namespace) -> None:
    """Train a cascade model and write it with its manifest

    Args:
        args: Parsed command line arguments
    """
    setup_logging(getattr(args, "verbose", False))
    try:
        settings = settings_from_args(args)
        pipeline = await load_pipeline(settings)
        docs = await load_jsonl(args.input)
        logger.debug("loaded %d documents from %s", len(docs), args.input)
        model = train_cascade(docs, settings, pipeline)
        await model.save(args.output)
    except FileNotFoundError as e:
        fail("train", f"cannot read '{e.filename or args.input}': No such file")
    except (CascadeTitlesError, OSError) as e:
        fail("train", e)

    print(
        f"coarse: {len(model.coarse.classes)} groups, "
        f"{model.coarse.n_features} features ({model.coarse.strategy})"
    )
    for group in model.groups:
        name = group_title(group, model.aliases)
        label = f"{group} ({name})" if name else group
        vertical = model.verticals.get(group)
        if vertical is None:
            print(f"{label}\tno vertical")
        else:
            print(
                f"{label}\t{len(vertical.clusters)} clusters\t"
                f"{len(vertical.clusters.member_ids)} documents"
            )
