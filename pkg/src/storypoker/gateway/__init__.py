"""Model gateway: chat-completion bindings, the estimation prompt, and the
fine-tune dataset exporter."""

from .bindings import (
    ChatTurn,
    GatewayError,
    ModelHTTPError,
    RemoteBinding,
    ScriptUnderrunError,
    ScriptedBinding,
    TransportError,
    binding_from_config,
    complete,
    load_bindings,
    validate_conversation,
)
from .estimation import (
    ESTIMATE_SENTINEL,
    ESTIMATION_SYSTEM_PROMPT,
    EstimateParseError,
    parse_estimate_reply,
    render_estimate_reply,
    render_estimation_conversation,
)
from .export import FinetuneRecord, export_finetune_dataset, read_finetune_dataset

__all__ = [
    "ChatTurn",
    "ESTIMATE_SENTINEL",
    "ESTIMATION_SYSTEM_PROMPT",
    "EstimateParseError",
    "FinetuneRecord",
    "GatewayError",
    "ModelHTTPError",
    "RemoteBinding",
    "ScriptUnderrunError",
    "ScriptedBinding",
    "TransportError",
    "binding_from_config",
    "complete",
    "load_bindings",
    "export_finetune_dataset",
    "parse_estimate_reply",
    "read_finetune_dataset",
    "render_estimate_reply",
    "render_estimation_conversation",
    "validate_conversation",
]
