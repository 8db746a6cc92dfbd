"""LLM proposal backend: prompt templates, response parsing, diff
application, and the OpenAI-compatible chat client."""

from .client import (
    BudgetExhausted,
    ChatError,
    ChatRequest,
    HttpStatusError,
    MalformedApiResponse,
    OpenAiChatClient,
    TransportError,
)
from .diff import AmbiguousMatch, DiffEdit, DiffError, NoMatch, NoOpEdit, apply_diff
from .kernels import LlmProposalKernel, RewardLedger, make_llm_kernels
from .parse import EmptyCode, MalformedDiffBlock, MissingTag, ParsedResponse, ParseError, parse_response
from .prompts import render_prompt, verify_templates

__all__ = [
    "BudgetExhausted",
    "ChatError",
    "ChatRequest",
    "HttpStatusError",
    "MalformedApiResponse",
    "OpenAiChatClient",
    "TransportError",
    "AmbiguousMatch",
    "DiffEdit",
    "DiffError",
    "NoMatch",
    "NoOpEdit",
    "apply_diff",
    "LlmProposalKernel",
    "RewardLedger",
    "make_llm_kernels",
    "EmptyCode",
    "MalformedDiffBlock",
    "MissingTag",
    "ParsedResponse",
    "ParseError",
    "parse_response",
    "render_prompt",
    "verify_templates",
]
