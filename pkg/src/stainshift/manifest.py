"""Dataset manifests: checksummed lists of materialized training patches.

A manifest records, for every patch file, the source image it came from and
the crop that produced it (or a whole-image flag), so a patch set can be
audited and re-derived. Paths are stored relative to the manifest location.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .imaging import PatchSpec, read_image

MANIFEST_VERSION = 1
DOMAIN_IHC = "IHC"
DOMAIN_HE = "H&E"
DOMAINS = (DOMAIN_IHC, DOMAIN_HE)


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return "sha256:" + digest.hexdigest()


@dataclass(frozen=True)
class ManifestEntry:
    source: str            # original image the patch came from
    file: str              # materialized patch file, relative to manifest
    checksum: str
    patch: PatchSpec | None = None   # None = whole image

    def as_dict(self) -> dict:
        patch = None if self.patch is None else {
            "row": self.patch.row, "col": self.patch.col,
            "size": self.patch.size,
        }
        return {"source": self.source, "file": self.file,
                "checksum": self.checksum, "patch": patch}

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        patch = d.get("patch")
        spec = None if patch is None else \
            PatchSpec(patch["row"], patch["col"], patch["size"])
        return cls(source=d["source"], file=d["file"],
                   checksum=d["checksum"], patch=spec)


@dataclass
class DatasetManifest:
    domain: str
    entries: list[ManifestEntry] = field(default_factory=list)
    version: int = MANIFEST_VERSION
    root: Path | None = None   # set on load; base for relative files

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, "
                             f"got {self.domain!r}")

    def as_dict(self) -> dict:
        return {
            "version": self.version,
            "domain": self.domain,
            "entries": [e.as_dict() for e in self.entries],
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path, validate: bool = True) -> "DatasetManifest":
        path = Path(path)
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        try:
            manifest = cls(
                domain=data["domain"],
                entries=[ManifestEntry.from_dict(e)
                         for e in data["entries"]],
                version=data["version"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed manifest {path}: {exc}") from exc
        if manifest.version != MANIFEST_VERSION:
            raise DataError(
                f"unsupported manifest version {manifest.version}")
        manifest.root = path.parent
        if validate:
            manifest.validate_files()
        return manifest

    def resolve(self, entry: ManifestEntry) -> Path:
        base = self.root or Path(".")
        return base / entry.file

    def validate_files(self) -> None:
        """Check that every referenced file exists and matches its checksum."""
        for entry in self.entries:
            path = self.resolve(entry)
            if not path.exists():
                raise DataError(f"manifest file missing: {path}")
            actual = sha256_file(path)
            if actual != entry.checksum:
                raise DataError(
                    f"checksum mismatch for {path}: recorded "
                    f"{entry.checksum}, found {actual}")

    def load_patches(self) -> list[np.ndarray]:
        patches = []
        for entry in self.entries:
            path = self.resolve(entry)
            try:
                patches.append(read_image(path))
            except DataError:
                raise
            except Exception as exc:
                raise DataError(f"unreadable patch {path}: {exc}") from exc
        return patches

    def checksum(self) -> str:
        """Digest of the manifest content (for run records)."""
        payload = json.dumps(self.as_dict(), sort_keys=True).encode()
        return "sha256:" + hashlib.sha256(payload).hexdigest()
