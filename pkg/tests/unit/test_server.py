"""Tests for the MCP server."""

from unittest.mock import AsyncMock, Mock, patch

import mcp.types as types
import pytest

from hsim_dml.server import handle_call_tool, handle_list_tools

pytestmark = pytest.mark.unit


@pytest.mark.asyncio
async def test_list_tools():
    """Every tool is advertised with an object schema."""
    tools = await handle_list_tools()
    names = [tool.name for tool in tools]
    assert names == ["generate_dataset", "run_experiment", "run_ablation_study", "run_noise_sweep", "evaluate_checkpoint"]
    assert all(tool.inputSchema["type"] == "object" for tool in tools)


@pytest.mark.asyncio
async def test_unknown_tool():
    """An unknown tool name comes back as an error text."""
    result = await handle_call_tool("train_forever", {})
    assert len(result) == 1
    assert result[0].text == "Error executing train_forever: Unknown tool: train_forever"


@pytest.mark.asyncio
async def test_dispatch_passes_arguments():
    """Arguments reach the tool unchanged."""
    reply = [types.TextContent(type="text", text="ok")]
    with patch("hsim_dml.server.run_noise_sweep", new=AsyncMock(return_value=reply)) as tool:
        result = await handle_call_tool("run_noise_sweep", {"name": "sweep", "ratios": [0.3]})
    tool.assert_awaited_once_with(name="sweep", ratios=[0.3])
    assert result == reply


@pytest.mark.asyncio
async def test_tool_exception_becomes_text():
    """A tool that raises is reported, not propagated."""
    with patch("hsim_dml.server.generate_dataset", new=AsyncMock(side_effect=RuntimeError("disk full"))):
        result = await handle_call_tool("generate_dataset", {})
    assert result[0].text == "Error executing generate_dataset: disk full"


@pytest.mark.asyncio
async def test_bad_arguments_become_text():
    """Unexpected keyword arguments are reported as errors."""
    result = await handle_call_tool("run_experiment", {"epochs": 3})
    assert result[0].text.startswith("Error executing run_experiment:")


class TestMCPTools:
    """Tool bodies with the engine patched out."""

    @pytest.mark.asyncio
    async def test_run_experiment_summary(self, output_root):
        from hsim_dml.tools.experiments import run_experiment

        fake = Mock()
        fake.wall_clock = 1.3
        fake.history = []
        fake.output_dir = output_root / "demo"
        fake.final.as_dict.return_value = {"recall@1": 0.5}
        with patch("hsim_dml.experiments.run", return_value=fake) as run:
            result = await run_experiment({"train": {"epochs": 0}}, name="demo")

        cfg = run.call_args.args[0]
        assert cfg.output_dir == str(output_root / "demo")
        assert result[0].text.startswith("Experiment demo finished in 1.3s")
        assert "recall@1: 0.5000" in result[0].text

    @pytest.mark.asyncio
    async def test_run_experiment_invalid_config(self, output_root):
        from hsim_dml.tools.experiments import run_experiment

        result = await run_experiment({"train": {"epochs": -1}})
        assert result[0].text.startswith("Error running experiment:")
        assert "train.epochs" in result[0].text

    @pytest.mark.asyncio
    async def test_generate_dataset_error(self, output_root):
        from hsim_dml.tools.datasets import generate_dataset

        result = await generate_dataset(samples_per_class=1)
        assert result[0].text.startswith("Error generating dataset:")
