"""MCP Server main entry point.

Exposes dataset generation, training runs, ablations, noise sweeps and
checkpoint evaluation as MCP tools over stdio.
"""

import asyncio
import logging
from typing import Any

import mcp.server.stdio
import mcp.types as types
from mcp.server import NotificationOptions, Server
from mcp.server.models import InitializationOptions

from . import __version__
from .config import load_settings
from .tools.datasets import generate_dataset
from .tools.experiments import evaluate_checkpoint, run_ablation_study, run_experiment, run_noise_sweep

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

_CONFIG_SCHEMA = {
    "type": "object",
    "description": "Experiment configuration (sections: dataset, noise, train, eval; fields: name, seed, workers)",
}

# Initialize the MCP server
server = Server("hsim-dml")


@server.list_tools()
async def handle_list_tools() -> list[types.Tool]:
    """List available tools.

    Returns
    -------
    List[types.Tool]
        List of available MCP tools.
    """
    return [
        # Dataset Tools
        types.Tool(
            name="generate_dataset",
            description="Generate a synthetic dataset with a known superclass/subclass hierarchy",
            inputSchema={
                "type": "object",
                "properties": {
                    "name": {"type": "string", "description": "File stem under the output root", "default": "dataset"},
                    "superclasses": {"type": "integer", "description": "Number of superclasses", "default": 5},
                    "subclasses_per_super": {"type": "integer", "description": "Classes per superclass", "default": 4},
                    "samples_per_class": {"type": "integer", "description": "Samples per class", "default": 60},
                    "dim": {"type": "integer", "description": "Feature dimension", "default": 32},
                    "seed": {"type": "integer", "description": "Generator seed", "default": 0},
                    "format": {"type": "string", "enum": ["binary", "csv"], "default": "binary"},
                },
            },
        ),
        # Experiment Tools
        types.Tool(
            name="run_experiment",
            description="Train an embedding model with noisy labels and report test Recall@K",
            inputSchema={
                "type": "object",
                "properties": {
                    "config": _CONFIG_SCHEMA,
                    "name": {"type": "string", "description": "Run name and output directory"},
                },
            },
        ),
        types.Tool(
            name="run_ablation_study",
            description="Compare baseline, class-wise divergence, sample-wise consistency, full and hyperbolic variants",
            inputSchema={
                "type": "object",
                "properties": {
                    "config": _CONFIG_SCHEMA,
                    "name": {"type": "string", "description": "Study name and output directory"},
                    "seeds": {"type": "array", "items": {"type": "integer"}, "description": "Seeds shared by every row"},
                },
            },
        ),
        types.Tool(
            name="run_noise_sweep",
            description="Compare the fixed-margin baseline with the full method across label-noise ratios",
            inputSchema={
                "type": "object",
                "properties": {
                    "config": _CONFIG_SCHEMA,
                    "name": {"type": "string", "description": "Sweep name and output directory"},
                    "ratios": {"type": "array", "items": {"type": "number"}, "description": "Noise ratios", "default": [0.3, 0.5, 0.7]},
                    "seeds": {"type": "array", "items": {"type": "integer"}, "description": "Seeds shared by every row"},
                },
            },
        ),
        types.Tool(
            name="evaluate_checkpoint",
            description="Evaluate a saved model checkpoint on the clean test split",
            inputSchema={
                "type": "object",
                "properties": {
                    "checkpoint": {"type": "string", "description": "Checkpoint path (relative to the output root)"},
                    "config": _CONFIG_SCHEMA,
                },
                "required": ["checkpoint"],
            },
        ),
    ]


@server.call_tool()
async def handle_call_tool(name: str, arguments: dict[str, Any]) -> list[types.TextContent]:
    """Handle tool calls.

    Parameters
    ----------
    name : str
        Name of the tool to call.
    arguments : Dict[str, Any]
        Arguments for the tool.

    Returns
    -------
    List[types.TextContent]
        Results from the tool call.

    Raises
    ------
    ValueError
        If the tool name is not recognized.
    """
    logger.info(f"Calling tool: {name} with arguments: {arguments}")

    try:
        # Dataset Tools
        if name == "generate_dataset":
            return await generate_dataset(**arguments)

        # Experiment Tools
        elif name == "run_experiment":
            return await run_experiment(**arguments)
        elif name == "run_ablation_study":
            return await run_ablation_study(**arguments)
        elif name == "run_noise_sweep":
            return await run_noise_sweep(**arguments)
        elif name == "evaluate_checkpoint":
            return await evaluate_checkpoint(**arguments)

        else:
            raise ValueError(f"Unknown tool: {name}")

    except Exception as e:
        logger.error(f"Error calling tool {name}: {e}")
        return [types.TextContent(type="text", text=f"Error executing {name}: {str(e)}")]


async def main():
    """Main entry point for the MCP server."""
    try:
        settings = load_settings()
        logger.setLevel(getattr(logging, settings.log_level.upper()))
        logger.info(f"Starting hsim-dml MCP server with output root: {settings.output_root}")

        # Run the server using stdio transport
        async with mcp.server.stdio.stdio_server() as (read_stream, write_stream):
            await server.run(
                read_stream,
                write_stream,
                InitializationOptions(
                    server_name="hsim-dml",
                    server_version=__version__,
                    capabilities=server.get_capabilities(
                        notification_options=NotificationOptions(),
                        experimental_capabilities={},
                    ),
                ),
            )
    except Exception as e:
        logger.error(f"Server failed to start: {e}")
        raise


def cli_main():
    """Synchronous entry point for console script."""
    try:
        asyncio.run(main())
    except Exception as e:
        # Print error to stderr and exit with non-zero code
        import sys

        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    cli_main()
