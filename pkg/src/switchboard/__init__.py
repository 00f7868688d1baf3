"""Self-hosted multi-model LLM gateway.

Federates local model runners and OpenAI-compatible remote endpoints
behind one catalog, adds branching multi-model chat with preference
capture, an external-process plugin system, prompt and model presets,
and package-based sharing.
"""
from .chat import ChatService, Conversation, MessageNode, PreferenceRecord
from .errors import SwitchboardError
from .hub import HubClient
from .params import GenerationParams
from .pipeline import GenerationPipeline
from .plugins import PluginEngine, PluginManifest
from .presets import ModelPreset, PresetEngine, PromptPreset
from .registry import BackendConfig, ModelDescriptor, ModelRegistry
from .store import DataDirLock, Store

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "ChatService",
    "Conversation",
    "DataDirLock",
    "GenerationParams",
    "GenerationPipeline",
    "HubClient",
    "MessageNode",
    "ModelDescriptor",
    "ModelPreset",
    "ModelRegistry",
    "PluginEngine",
    "PluginManifest",
    "PreferenceRecord",
    "PresetEngine",
    "PromptPreset",
    "Store",
    "SwitchboardError",
    "__version__",
]
