"""Typed errors shared across the gateway.

Every error carries a stable snake_case ``code`` used verbatim in the HTTP
error envelope, and optionally the name of the offending field.
"""
from __future__ import annotations


class SwitchboardError(Exception):
    """Base class for all gateway errors."""

    code = "internal_error"

    def __init__(self, message: str = "", *, field: str | None = None):
        super().__init__(message or self.__doc__ or self.code)
        self.field = field

    @property
    def message(self) -> str:
        return str(self)


# -- model registry ---------------------------------------------------------

class DuplicateBackend(SwitchboardError):
    """A backend with this id is already registered."""
    code = "duplicate_backend"


class InvalidUrl(SwitchboardError):
    """Backend base URL is not a valid http(s) URL."""
    code = "invalid_url"


class UnknownModel(SwitchboardError):
    """No such model on this backend."""
    code = "unknown_model"


class BackendUnreachable(SwitchboardError):
    """Could not connect to the backend."""
    code = "backend_unreachable"


class RouteNotFound(SwitchboardError):
    """Model id does not resolve to any backend, pipe, or preset."""
    code = "route_not_found"


class CyclicPreset(SwitchboardError):
    """Preset chain exceeds the resolution depth limit."""
    code = "cyclic_preset"


class UnsupportedFormat(SwitchboardError):
    """Uploaded blob failed the format magic check."""
    code = "unsupported_format"


# -- chat -------------------------------------------------------------------

class UnknownConversation(SwitchboardError):
    """No conversation with this id."""
    code = "unknown_conversation"


class UnknownNode(SwitchboardError):
    """No message node with this id in the conversation."""
    code = "unknown_node"


class UnknownParent(SwitchboardError):
    """parent_id does not name a node in the conversation."""
    code = "unknown_parent"


class EmptyContent(SwitchboardError):
    """Message content must be non-empty."""
    code = "empty_content"


class NotAssistantNode(SwitchboardError):
    """Operation applies only to assistant nodes."""
    code = "not_assistant_node"


class ConcurrencyLimitExceeded(SwitchboardError):
    """Too many generations in flight."""
    code = "concurrency_limit_exceeded"


class BadChatLog(SwitchboardError):
    """Chat-log document is malformed or not a supported version."""
    code = "bad_chat_log"


# -- plugins ----------------------------------------------------------------

class HandshakeFailed(SwitchboardError):
    """Plugin process did not complete the describe handshake."""
    code = "handshake_failed"


class ManifestInvalid(SwitchboardError):
    """Plugin manifest failed validation."""
    code = "manifest_invalid"


class DuplicatePlugin(SwitchboardError):
    """Plugin id already installed at the same or newer version."""
    code = "duplicate_plugin"


class UnknownPlugin(SwitchboardError):
    """No installed plugin with this id."""
    code = "unknown_plugin"


class PluginDisabled(SwitchboardError):
    """Plugin is installed but disabled."""
    code = "plugin_disabled"


class PluginFailedState(SwitchboardError):
    """Plugin exceeded its restart budget and is parked as failed."""
    code = "plugin_failed_state"


class FilterAborted(SwitchboardError):
    """A fail-closed filter errored; request aborted."""
    code = "filter_aborted"


class FilterTimeout(SwitchboardError):
    """A fail-closed filter exceeded its invocation timeout."""
    code = "filter_timeout"


class PipeCrashed(SwitchboardError):
    """Pipe plugin process died mid-stream."""
    code = "pipe_crashed"


class PipeTimeout(SwitchboardError):
    """Pipe plugin exceeded its invocation timeout."""
    code = "pipe_timeout"


class ToolTimeout(SwitchboardError):
    """Tool plugin exceeded its invocation timeout."""
    code = "tool_timeout"


class ActionFailed(SwitchboardError):
    """Action plugin returned an error."""
    code = "action_failed"


class ResultTypeMismatch(SwitchboardError):
    """Action result type differs from the manifest declaration."""
    code = "result_type_mismatch"


class InvocationFailed(SwitchboardError):
    """Plugin invocation failed (crash, protocol error, or error reply)."""
    code = "invocation_failed"


# -- presets ----------------------------------------------------------------

class UnknownCommand(SwitchboardError):
    """No prompt preset registered under this command."""
    code = "unknown_command"


class DuplicateCommand(SwitchboardError):
    """A prompt preset already uses this command."""
    code = "duplicate_command"


class InvalidPreset(SwitchboardError):
    """Preset definition failed validation."""
    code = "invalid_preset"


class InvalidParams(SwitchboardError):
    """Generation parameters out of range."""
    code = "invalid_params"


# -- hub --------------------------------------------------------------------

class IntegrityError(SwitchboardError):
    """Package digest does not match its payload."""
    code = "integrity_error"


class PackageFormatError(SwitchboardError):
    """Package text is not valid front-matter + payload."""
    code = "package_format_error"


class UnsupportedCategory(SwitchboardError):
    """Package category is unknown or inconsistent with its payload."""
    code = "unsupported_category"


class HubUnreachable(SwitchboardError):
    """Hub endpoint could not be reached and no cache is available."""
    code = "hub_unreachable"


class HubNotConfigured(SwitchboardError):
    """No hub URL configured; hub features are off by default."""
    code = "hub_not_configured"


class ConsentRequired(SwitchboardError):
    """Sharing requires explicit consent."""
    code = "consent_required"


class UnknownResource(SwitchboardError):
    """No local resource matches this export reference."""
    code = "unknown_resource"


# -- server / store ---------------------------------------------------------

class ConfigInvalid(SwitchboardError):
    """Server configuration rejected."""
    code = "config_invalid"


class DataDirLocked(SwitchboardError):
    """Another instance already holds the data directory."""
    code = "data_dir_locked"


class UnknownUser(SwitchboardError):
    """No user with this id."""
    code = "unknown_user"


class PermissionDenied(SwitchboardError):
    """Caller lacks the role or ownership this operation requires."""
    code = "permission_denied"


class SignupDisabled(SwitchboardError):
    """Signups are disabled on this server."""
    code = "signup_disabled"


class DuplicateEmail(SwitchboardError):
    """An account with this email already exists."""
    code = "duplicate_email"


class WeakPassword(SwitchboardError):
    """Password does not meet the minimum length."""
    code = "weak_password"


class InvalidCredentials(SwitchboardError):
    """Email/password pair does not match an account."""
    code = "invalid_credentials"


class InvalidToken(SwitchboardError):
    """Bearer token missing, malformed, expired, or forged."""
    code = "invalid_token"


class AccountPending(SwitchboardError):
    """Account awaits admin approval."""
    code = "account_pending"


class LastAdminProtection(SwitchboardError):
    """Cannot demote or disable the only remaining admin."""
    code = "last_admin_protection"
