"""Teachable driving agents.

Sparse differentiable policy graphs, a small policy description language,
an arcade driving simulator, an imitation trainer, an LLM-backed program
restructurer, and a teaching session engine with an HTTP/WebSocket service.
"""

__version__ = "0.1.0"
