"""Adaptive hierarchical-similarity metric learning.

Hierarchical-margin pair losses that stay robust under noisy labels: class-wise
divergence margins, sample-wise consistency margins from contrastive
augmentation, and an optional Poincaré-ball embedding geometry, together with
an experiment harness and MCP tools for running it.
"""

__version__ = "0.1.0"
__author__ = "Your Name"
__email__ = "your.email@example.com"
