"""File-based artifact registry: datasets/, models/, reports/ plus index.json.

Index entries are derived from file contents (and the ``_s<seed>`` suffix of
dataset file names), so the index can always be rebuilt by a directory scan.
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path

from .core import VbsPowerError, load_model

REGISTRY_ENV = "VBSPOWER_REGISTRY"
INDEX_NAME = "index.json"
_SEED_RE = re.compile(r"_s(\d+)$")


def default_root() -> Path:
    return Path(os.environ.get(REGISTRY_ENV, "registry"))


class Registry:
    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else default_root()

    @property
    def datasets(self) -> Path:
        return self.root / "datasets"

    @property
    def models(self) -> Path:
        return self.root / "models"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def index_path(self) -> Path:
        return self.root / INDEX_NAME

    def ensure(self) -> Registry:
        for d in (self.datasets, self.models, self.reports):
            d.mkdir(parents=True, exist_ok=True)
        return self

    def _rel(self, path: Path) -> str:
        return Path(os.path.relpath(Path(path).resolve(), self.root.resolve())).as_posix()

    def describe(self, path: str | os.PathLike) -> dict | None:
        """Index entry for an artifact file, or None if it is not indexable."""
        path = Path(path)
        parent = path.parent.name
        if parent == "datasets" and path.suffix == ".csv":
            with open(path, encoding="utf-8") as fh:
                fh.readline()
                first = fh.readline().strip().split(",")
            seed_match = _SEED_RE.search(path.stem)
            scheduler = first[4] if len(first) == 6 else path.stem.split("_")[-2] if "_" in path.stem else ""
            platform = first[5] if len(first) == 6 else ""
            return {
                "kind": f"dataset_{scheduler}" if scheduler else "dataset",
                "platform": platform,
                "scenario": "",
                "seed": int(seed_match.group(1)) if seed_match else None,
                "path": self._rel(path),
            }
        if parent == "models" and path.suffix == ".json":
            m = load_model(path)
            return {
                "kind": m.model_kind.value,
                "platform": m.platform,
                "scenario": m.train_scenario,
                "seed": m.seed,
                "path": self._rel(path),
            }
        if parent == "reports" and path.suffix == ".json":
            meta = json.loads(path.read_text(encoding="utf-8")).get("meta", {})
            return {
                "kind": "report",
                "platform": meta.get("platform", ""),
                "scenario": meta.get("scenario", ""),
                "seed": meta.get("seeds"),
                "path": self._rel(path),
            }
        return None

    def scan(self) -> list[dict]:
        entries = []
        for d in (self.datasets, self.models, self.reports):
            if not d.is_dir():
                continue
            for p in sorted(d.iterdir()):
                entry = self.describe(p) if p.is_file() else None
                if entry is not None:
                    entries.append(entry)
        return sorted(entries, key=lambda e: e["path"])

    def read_index(self) -> list[dict]:
        if not self.index_path.is_file():
            return []
        try:
            return json.loads(self.index_path.read_text(encoding="utf-8"))["artifacts"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise VbsPowerError(f"corrupt registry index {self.index_path}: {exc}") from None

    def _write(self, entries: list[dict]) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        doc = {"artifacts": sorted(entries, key=lambda e: e["path"])}
        self.index_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def register(self, path: str | os.PathLike) -> dict:
        entry = self.describe(path)
        if entry is None:
            raise VbsPowerError(f"{path} is not a registry artifact (expected under datasets/, models/ or reports/)")
        entries = [
            e for e in self.read_index() if e["path"] != entry["path"] and (self.root / e["path"]).is_file()
        ]
        entries.append(entry)
        self._write(entries)
        return entry

    def rebuild(self) -> list[dict]:
        entries = self.scan()
        self._write(entries)
        return entries
