"""Prompt rendering, the chat-completion gateway, and the offline mock."""

from .gateway import (
    AuthError,
    EndpointConfig,
    LlmGateway,
    LlmResponse,
    MalformedResponse,
    RateLimited,
    TransportError,
    extract,
)
from .mock import MockBackend, RecordingBackend, ScriptedBackend, mock_evolve
from .prompts import EOH_CYCLE, MissingBinding, Operator, PromptRequest, render

__all__ = [
    "EOH_CYCLE",
    "AuthError",
    "EndpointConfig",
    "LlmGateway",
    "LlmResponse",
    "MalformedResponse",
    "MissingBinding",
    "MockBackend",
    "Operator",
    "PromptRequest",
    "RateLimited",
    "RecordingBackend",
    "ScriptedBackend",
    "TransportError",
    "extract",
    "mock_evolve",
    "render",
]
