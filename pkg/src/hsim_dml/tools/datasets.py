"""Tools for synthetic dataset generation."""

import asyncio
import logging
from pathlib import Path

import mcp.types as types

from ..config import DatasetSource, load_settings
from ..dataio import generate_hierarchical, save_features

logger = logging.getLogger(__name__)


async def generate_dataset(
    name: str = "dataset",
    superclasses: int = 5,
    subclasses_per_super: int = 4,
    samples_per_class: int = 60,
    dim: int = 32,
    seed: int = 0,
    format: str = "binary",
) -> list[types.TextContent]:
    """Generate a synthetic hierarchical dataset under the output root.

    Parameters
    ----------
    name : str
        File stem under ``<output root>/datasets``.
    superclasses, subclasses_per_super, samples_per_class, dim : int
        Shape of the class hierarchy.
    seed : int
        Generator seed.
    format : str
        ``binary`` or ``csv``.

    Returns
    -------
    List[types.TextContent]
        Summary of the written dataset formatted for MCP client.
    """
    settings = load_settings()

    def _sync_generate():
        try:
            source = DatasetSource(
                superclasses=superclasses,
                subclasses_per_super=subclasses_per_super,
                samples_per_class=samples_per_class,
                dim=dim,
                format=format,  # type: ignore[arg-type]
            )
            dataset = generate_hierarchical(source.hierarchy_spec(), seed)
            suffix = "csv" if source.format == "csv" else "hsfd"
            path = save_features(dataset, settings.confine(Path("datasets") / f"{name}.{suffix}"), source.format)
            train, test = dataset.train(), dataset.test()
            result = f"""Dataset written: {path}

Classes: {dataset.num_classes} ({superclasses} superclasses x {subclasses_per_super} subclasses)
Samples: {dataset.features.shape[0]} (train {train.labels.size}, test {test.labels.size})
Dimension: {dataset.dim}
Format: {source.format}
Seed: {seed}"""
            return [types.TextContent(type="text", text=result)]
        except Exception as e:
            return [types.TextContent(type="text", text=f"Error generating dataset: {str(e)}")]

    # Run the sync function in a thread pool
    return await asyncio.to_thread(_sync_generate)
