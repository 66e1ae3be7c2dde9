"""Multimodal fetch-instruction grounding: tensor core, attention-branch
model, synthetic scene generator, trainer and CLI."""

__version__ = "0.1.0"
