"""In-process content store for captured images.

Camera captures live here for the duration of a run; BlobRefs handed to
clients resolve back through this store (GET /blobs/{id}, e-mail attachments,
uploads). Content is hashed at put time so every ref can be verified.
"""

from __future__ import annotations

import hashlib
import threading
import uuid

from .errors import UnknownBlobError
from .model import BlobRef


class ImageStore:
    def __init__(self):
        self._items: dict[str, tuple[bytes, str]] = {}
        self._refs: dict[str, BlobRef] = {}
        self._lock = threading.Lock()

    def put(self, data: bytes, mime: str) -> BlobRef:
        ref = BlobRef(
            id=uuid.uuid4().hex,
            mime=mime,
            sizeBytes=len(data),
            sha256=hashlib.sha256(data).hexdigest(),
        )
        with self._lock:
            self._items[ref.id] = (bytes(data), mime)
            self._refs[ref.id] = ref
        return ref

    def get(self, blob_id: str) -> tuple[bytes, str]:
        """Return (bytes, mime) for a stored blob."""
        with self._lock:
            if blob_id not in self._items:
                raise UnknownBlobError(f"no blob {blob_id!r}")
            return self._items[blob_id]

    def ref(self, blob_id: str) -> BlobRef:
        with self._lock:
            if blob_id not in self._refs:
                raise UnknownBlobError(f"no blob {blob_id!r}")
            return self._refs[blob_id]

    def __contains__(self, blob_id: str) -> bool:
        with self._lock:
            return blob_id in self._items
