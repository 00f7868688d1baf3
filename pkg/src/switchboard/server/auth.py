"""Accounts and sessions: first-user-admin signup, opaque bearer tokens.

Passwords are stored as salted PBKDF2 hashes, tokens only as SHA-256
hashes inside the owning user record, so a copied data directory leaks
no usable credentials. Later signups start as role=pending until an
admin approves them.
"""
from __future__ import annotations

import hashlib
import hmac
import secrets
import threading
import uuid
from datetime import datetime, timedelta, timezone
from typing import Any

from ..errors import (
    DuplicateEmail,
    InvalidCredentials,
    InvalidParams,
    InvalidToken,
    LastAdminProtection,
    PermissionDenied,
    SignupDisabled,
    UnknownUser,
    WeakPassword,
)

ROLES = ("admin", "user", "pending")
MIN_PASSWORD_LEN = 8
SESSION_LIFETIME_DAYS = 30
MAX_SESSIONS_PER_USER = 20
PBKDF2_ITERATIONS = 120_000
TOKEN_PREFIX = "sbt"


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _iso(moment: datetime) -> str:
    return moment.isoformat().replace("+00:00", "Z")


def hash_password(password: str) -> str:
    salt = secrets.token_hex(16)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"),
                                 bytes.fromhex(salt), PBKDF2_ITERATIONS)
    return f"pbkdf2_sha256${PBKDF2_ITERATIONS}${salt}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        scheme, iter_text, salt, expected = stored.split("$")
        iterations = int(iter_text)
    except ValueError:
        return False
    if scheme != "pbkdf2_sha256":
        return False
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"),
                                 bytes.fromhex(salt), iterations)
    return hmac.compare_digest(digest.hex(), expected)


def _token_hash(token: str) -> str:
    return hashlib.sha256(token.encode("utf-8")).hexdigest()


def public_user(record: dict[str, Any]) -> dict[str, Any]:
    return {key: record.get(key)
            for key in ("id", "name", "email", "role", "created_at",
                        "role_updated_at")}


class AuthService:
    def __init__(self, store, signup_enabled: bool = True):
        self._store = store
        self.signup_enabled = signup_enabled
        self._signup_lock = threading.Lock()

    # -- accounts ---------------------------------------------------------------

    def _email_key(self, email: str) -> str:
        return f"email:{email.strip().lower()}"

    def signup(self, name: str, email: str, password: str) -> dict[str, Any]:
        if not self.signup_enabled:
            raise SignupDisabled("signups are disabled on this server")
        if not isinstance(name, str) or not name.strip():
            raise InvalidParams("name is required", field="name")
        if not isinstance(email, str) or "@" not in email:
            raise InvalidParams("a valid email is required", field="email")
        if not isinstance(password, str) or len(password) < MIN_PASSWORD_LEN:
            raise WeakPassword(
                f"password must be at least {MIN_PASSWORD_LEN} characters",
                field="password")
        with self._signup_lock:
            email_key = self._email_key(email)
            if self._store.get("users", email_key) is not None:
                raise DuplicateEmail(f"email {email!r} is already registered")
            first = not any(True for key in self._store.keys("users")
                            if not key.startswith("email:"))
            record = {
                "id": f"u-{uuid.uuid4().hex}",
                "name": name.strip(),
                "email": email.strip().lower(),
                "role": "admin" if first else "pending",
                "credential_hash": hash_password(password),
                "created_at": _iso(_now()),
                "role_updated_at": None,
                "sessions": [],
            }
            self._store.put("users", record["id"], record)
            self._store.put("users", email_key, {"user_id": record["id"]})
        return public_user(record)

    def get_user(self, user_id: str) -> dict[str, Any]:
        record = self._store.get("users", user_id)
        if record is None or "id" not in record:
            raise UnknownUser(f"no user {user_id!r}")
        return record

    def find_by_email(self, email: str) -> dict[str, Any] | None:
        index = self._store.get("users", self._email_key(email))
        if index is None:
            return None
        return self._store.get("users", index["user_id"])

    def list_users(self) -> list[dict[str, Any]]:
        out = []
        for key, record in self._store.items("users"):
            if key.startswith("email:"):
                continue
            out.append(public_user(record))
        out.sort(key=lambda u: (u.get("created_at") or "", u["id"]))
        return out

    # -- sessions ---------------------------------------------------------------

    def login(self, email: str, password: str) -> tuple[str, dict[str, Any]]:
        record = self.find_by_email(email or "")
        if record is None or not verify_password(password or "",
                                                 record["credential_hash"]):
            raise InvalidCredentials("email or password incorrect")
        # hex keeps the token free of underscores, so the user id segment
        # parses unambiguously
        token = f"{TOKEN_PREFIX}_{record['id']}_{secrets.token_hex(20)}"
        expires = _iso(_now() + timedelta(days=SESSION_LIFETIME_DAYS))

        def add_session(raw: dict[str, Any]) -> dict[str, Any]:
            sessions = [s for s in raw.get("sessions", [])
                        if s.get("expires_at", "") > _iso(_now())]
            sessions.append({"token_hash": _token_hash(token),
                             "created_at": _iso(_now()),
                             "expires_at": expires})
            raw["sessions"] = sessions[-MAX_SESSIONS_PER_USER:]
            return raw

        self._store.update("users", record["id"], add_session)
        return token, public_user(record)

    def verify_token(self, token: str | None) -> dict[str, Any]:
        if not token or not token.startswith(f"{TOKEN_PREFIX}_"):
            raise InvalidToken("missing or malformed bearer token")
        body = token[len(TOKEN_PREFIX) + 1:]
        user_id, sep, _ = body.rpartition("_")
        if not sep or not user_id:
            raise InvalidToken("missing or malformed bearer token")
        record = self._store.get("users", user_id)
        if record is None:
            raise InvalidToken("token does not match a known session")
        wanted = _token_hash(token)
        now = _iso(_now())
        for session in record.get("sessions", []):
            if hmac.compare_digest(session.get("token_hash", ""), wanted):
                if session.get("expires_at", "") <= now:
                    raise InvalidToken("token expired")
                return public_user(record)
        raise InvalidToken("token does not match a known session")

    # -- administration --------------------------------------------------------------

    def _admin_count(self) -> int:
        return sum(1 for key, record in self._store.items("users")
                   if not key.startswith("email:") and record.get("role") == "admin")

    def approve_user(self, caller: dict[str, Any], user_id: str) -> dict[str, Any]:
        return self.set_role(caller, user_id, "user")

    def set_role(self, caller: dict[str, Any], user_id: str,
                 role: str) -> dict[str, Any]:
        if caller.get("role") != "admin":
            raise PermissionDenied("only admins manage accounts")
        if role not in ROLES:
            raise InvalidParams(f"role must be one of {ROLES}", field="role")
        record = self.get_user(user_id)
        if record["role"] == "admin" and role != "admin" \
                and self._admin_count() <= 1:
            raise LastAdminProtection("cannot demote the only admin")

        def mutate(raw: dict[str, Any]) -> dict[str, Any]:
            raw["role"] = role
            raw["role_updated_at"] = _iso(_now())
            return raw

        self._store.update("users", user_id, mutate)
        return public_user(self.get_user(user_id))
