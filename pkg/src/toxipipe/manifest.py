"""Pipeline run manifest: stage inputs are hashed so reruns can no-op.

Each stage records a fingerprint of its inputs (file contents, parameters,
seed) and its output paths. Re-invoking a stage with an identical
fingerprint and intact outputs skips the work, which makes every CLI
subcommand idempotent by construction.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


def hash_file(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]


def hash_params(params: dict) -> str:
    canonical = json.dumps(params, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def stage_fingerprint(input_paths: list[Path | str], params: dict) -> str:
    parts = {str(p): hash_file(p) for p in input_paths if Path(p).exists()}
    return hash_params({"inputs": parts, "params": params})


@dataclass
class PipelineManifest:
    path: Path
    stages: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def load(cls, data_dir: Path | str) -> "PipelineManifest":
        path = Path(data_dir) / "manifest.json"
        stages = {}
        if path.exists():
            stages = json.loads(path.read_text(encoding="utf-8")).get("stages", {})
        return cls(path=path, stages=stages)

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(
            json.dumps({"stages": self.stages}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def is_fresh(self, stage: str, fingerprint: str) -> bool:
        """True when this stage already ran on identical inputs and its
        outputs are still on disk."""
        record = self.stages.get(stage)
        if record is None or record.get("fingerprint") != fingerprint:
            return False
        return all(Path(p).exists() for p in record.get("outputs", []))

    def record(
        self,
        stage: str,
        fingerprint: str,
        outputs: list[Path | str],
        seed: Optional[int] = None,
    ) -> None:
        self.stages[stage] = {
            "fingerprint": fingerprint,
            "outputs": [str(p) for p in outputs],
            "seed": seed,
            "completed_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        self.save()
