"""Pluggable backends for the three external effects: e-mail, cloud blob
storage, and the append-only alert text stream.

The shipped defaults are local-filesystem fakes so the whole system runs
offline; each interface also has an in-memory twin for tests. Real SMTP or
cloud clients would plug in behind the same three interfaces.
"""

from __future__ import annotations

import email.policy
import logging
import os
import re
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from email.message import EmailMessage
from email.utils import format_datetime
from pathlib import Path
from typing import Callable, Optional

from .clock import Clock, RealClock
from .errors import (
    AlreadyExistsError,
    InvalidAddressError,
    InvalidNameError,
    InvalidTextError,
    IoFailureError,
    PathEscapeError,
    UnknownBlobError,
)

logger = logging.getLogger(__name__)

_NAME_RE = re.compile(r"^[A-Za-z0-9._-]{1,128}$")
_ADDR_RE = re.compile(r"^[^@\s]+@[^@\s]+$")


def validate_address(to: str) -> None:
    """Minimal addr-spec shape check: one @, non-empty sides, no whitespace."""
    if not isinstance(to, str) or to.count("@") != 1 or not _ADDR_RE.match(to):
        raise InvalidAddressError(f"not a mail address: {to!r}")


def check_path_component(value: str, what: str = "name") -> str:
    """Reject anything that could escape or traverse the storage root."""
    if not isinstance(value, str) or not value:
        raise InvalidNameError(f"{what} must be a non-empty string")
    if "/" in value or "\\" in value or value in (".", ".."):
        raise PathEscapeError(f"{what} {value!r} is not a safe path component")
    if not _NAME_RE.match(value):
        raise InvalidNameError(f"{what} {value!r} not matching [A-Za-z0-9._-]{{1,128}}")
    return value


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + f".tmp-{uuid.uuid4().hex[:8]}")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


# --- mail --------------------------------------------------------------------

@dataclass(frozen=True)
class Attachment:
    mime: str
    data: bytes


class MailSink:
    """send() hands one message to the transport and returns its MessageId."""

    def send(self, to: str, subject: str, body: str, attachment: Optional[Attachment] = None) -> str:
        raise NotImplementedError


class FilesystemMailSink(MailSink):
    """Outbox fake: one RFC-5322 .eml file per message, base64 attachments.

    Date and Message-ID are derived from the injected clock/id factory, which
    makes the produced bytes reproducible for golden tests.
    """

    def __init__(
        self,
        outbox_dir,
        clock: Clock | None = None,
        sender: str = "hub@generichub.local",
        message_id_factory: Callable[[], str] | None = None,
    ):
        self._outbox = Path(outbox_dir)
        self._clock = clock or RealClock()
        self._sender = sender
        self._new_id = message_id_factory or (lambda: uuid.uuid4().hex)

    def send(self, to, subject, body, attachment=None):
        message_id = self._new_id()
        msg = EmailMessage()
        msg["From"] = self._sender
        msg["To"] = to
        msg["Subject"] = subject
        stamp = datetime.fromtimestamp(self._clock.now_ms() / 1000.0, tz=timezone.utc)
        msg["Date"] = format_datetime(stamp)
        msg["Message-ID"] = f"<{message_id}@generichub.local>"
        msg.set_content(body)
        if attachment is not None:
            maintype, _, subtype = attachment.mime.partition("/")
            msg.add_attachment(
                attachment.data,
                maintype=maintype or "application",
                subtype=subtype or "octet-stream",
                filename=f"image.{subtype or 'bin'}",
            )
            # Boundary derived from the message id, not random bytes, so the
            # framing is reproducible for golden tests.
            msg.set_boundary(f"=-generichub-{message_id}")
        try:
            self._outbox.mkdir(parents=True, exist_ok=True)
            _atomic_write(self._outbox / f"{message_id}.eml", msg.as_bytes(policy=email.policy.SMTP))
        except OSError as exc:
            raise IoFailureError(f"cannot write outbox message: {exc}") from exc
        return message_id


@dataclass(frozen=True)
class SentMail:
    messageId: str
    to: str
    subject: str
    body: str
    attachment: Optional[Attachment]


class MemoryMailSink(MailSink):
    def __init__(self):
        self.messages: list[SentMail] = []
        self._lock = threading.Lock()

    def send(self, to, subject, body, attachment=None):
        message_id = uuid.uuid4().hex
        with self._lock:
            self.messages.append(SentMail(message_id, to, subject, body, attachment))
        return message_id


# --- cloud blob storage stand-in ----------------------------------------------

class BlobStore:
    """put refuses overwrite; put-then-get returns identical bytes."""

    def put(self, container: str, name: str, mime: str, data: bytes) -> str:
        raise NotImplementedError

    def get(self, container: str, name: str) -> bytes:
        raise NotImplementedError

    def exists(self, container: str, name: str) -> bool:
        raise NotImplementedError


class DirBlobStore(BlobStore):
    """Local directory tree root/container/name; URLs use the file scheme."""

    def __init__(self, root):
        self._root = Path(root)
        self._lock = threading.Lock()

    def _target(self, container, name) -> Path:
        check_path_component(container, "container")
        check_path_component(name, "name")
        return self._root / container / name

    def put(self, container, name, mime, data):
        target = self._target(container, name)
        with self._lock:
            if target.exists():
                raise AlreadyExistsError(f"{container}/{name} already stored")
            try:
                target.parent.mkdir(parents=True, exist_ok=True)
                _atomic_write(target, data)
            except OSError as exc:
                raise IoFailureError(f"cannot store blob: {exc}") from exc
        return f"file://{target.resolve()}"

    def get(self, container, name):
        target = self._target(container, name)
        try:
            return target.read_bytes()
        except FileNotFoundError:
            raise UnknownBlobError(f"no stored blob {container}/{name}") from None
        except OSError as exc:
            raise IoFailureError(f"cannot read blob: {exc}") from exc

    def exists(self, container, name):
        return self._target(container, name).exists()


class MemoryBlobStore(BlobStore):
    def __init__(self):
        self._items: dict[tuple[str, str], bytes] = {}
        self._lock = threading.Lock()

    def put(self, container, name, mime, data):
        check_path_component(container, "container")
        check_path_component(name, "name")
        with self._lock:
            if (container, name) in self._items:
                raise AlreadyExistsError(f"{container}/{name} already stored")
            self._items[(container, name)] = bytes(data)
        return f"mem://{container}/{name}"

    def get(self, container, name):
        with self._lock:
            if (container, name) not in self._items:
                raise UnknownBlobError(f"no stored blob {container}/{name}")
            return self._items[(container, name)]

    def exists(self, container, name):
        with self._lock:
            return (container, name) in self._items


# --- append-only text streams ---------------------------------------------------

class DataStreamStore:
    """Dense zero-based offsets; append is durable before it returns."""

    def append(self, stream_name: str, text: str) -> int:
        raise NotImplementedError

    def read(self, stream_name: str, from_offset: int = 0) -> list[str]:
        raise NotImplementedError


def _check_stream_text(text: str) -> str:
    if not isinstance(text, str):
        raise InvalidTextError("stream text must be a string")
    if "\n" in text or "\r" in text:
        raise InvalidTextError("stream text must not contain newlines")
    return text


class FileStreamStore(DataStreamStore):
    """One file per stream under root; each record is one tab-separated line
    "timestampUtcMs\\ttext". Offsets continue across process restarts."""

    def __init__(self, root, clock: Clock | None = None):
        self._root = Path(root)
        self._clock = clock or RealClock()
        self._counts: dict[str, int] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._master = threading.Lock()

    def _path(self, stream_name) -> Path:
        check_path_component(stream_name, "stream")
        return self._root / f"{stream_name}.log"

    def _stream_lock(self, stream_name) -> threading.Lock:
        with self._master:
            return self._locks.setdefault(stream_name, threading.Lock())

    def append(self, stream_name, text):
        path = self._path(stream_name)
        _check_stream_text(text)
        with self._stream_lock(stream_name):
            try:
                if stream_name not in self._counts:
                    self._counts[stream_name] = self._count_lines(path)
                offset = self._counts[stream_name]
                self._root.mkdir(parents=True, exist_ok=True)
                with open(path, "a", encoding="utf-8", newline="") as fh:
                    fh.write(f"{self._clock.now_ms()}\t{text}\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                raise IoFailureError(f"cannot append to stream: {exc}") from exc
            self._counts[stream_name] = offset + 1
            return offset

    def read(self, stream_name, from_offset=0):
        path = self._path(stream_name)
        with self._stream_lock(stream_name):
            try:
                with open(path, encoding="utf-8") as fh:
                    lines = [line.rstrip("\n") for line in fh]
            except FileNotFoundError:
                return []
            except OSError as exc:
                raise IoFailureError(f"cannot read stream: {exc}") from exc
        return lines[from_offset:]

    @staticmethod
    def _count_lines(path: Path) -> int:
        try:
            with open(path, "rb") as fh:
                return sum(1 for _ in fh)
        except FileNotFoundError:
            return 0


class MemoryStreamStore(DataStreamStore):
    def __init__(self, clock: Clock | None = None):
        self._clock = clock or RealClock()
        self._streams: dict[str, list[str]] = {}
        self._lock = threading.Lock()

    def append(self, stream_name, text):
        check_path_component(stream_name, "stream")
        _check_stream_text(text)
        with self._lock:
            lines = self._streams.setdefault(stream_name, [])
            lines.append(f"{self._clock.now_ms()}\t{text}")
            return len(lines) - 1

    def read(self, stream_name, from_offset=0):
        check_path_component(stream_name, "stream")
        with self._lock:
            return list(self._streams.get(stream_name, ()))[from_offset:]
