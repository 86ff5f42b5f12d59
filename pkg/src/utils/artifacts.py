"""
Run directory writer; every artifact goes through one lock and is hashed
"""

import json
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from parsers.grid_file import encode_grid, encode_points
from utils.helpers import sha256_bytes
from utils.render import RenderedImage, render


class ArtifactWriter:
    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: List[Dict[str, Any]] = []
        self.images: Dict[str, Dict[str, Any]] = {}
        self._lock = threading.Lock()

    def _write(self, relpath: str, data: bytes, kind: str) -> Path:
        path = self.out_dir / relpath
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
            self.artifacts.append(
                {"path": relpath, "kind": kind, "bytes": len(data), "sha256": sha256_bytes(data)}
            )
        return path

    def grid(self, relpath: str, array: np.ndarray, name: str, extent) -> Path:
        return self._write(relpath, encode_grid(array, name, extent), "grid")

    def points(self, relpath: str, points: np.ndarray, name: str) -> Path:
        return self._write(relpath, encode_points(points, name), "points")

    def image(
        self, relpath: str, array: np.ndarray, style: str, background: Optional[np.ndarray] = None
    ) -> RenderedImage:
        rendered = render(array, style, background)
        self._write(relpath, rendered.data, "image")
        with self._lock:
            self.images[relpath] = {
                "style": style,
                "range": list(rendered.value_range),
                "nan_pixels": rendered.nan_pixels,
            }
        return rendered

    def data(self, relpath: str, payload: Any) -> Path:
        """JSON or YAML document, by extension"""
        if relpath.endswith((".yaml", ".yml")):
            text = yaml.safe_dump(payload, sort_keys=False)
        else:
            text = json.dumps(payload, indent=2, sort_keys=True)
        return self._write(relpath, text.encode("utf-8"), "data")

    @property
    def nan_pixels(self) -> int:
        return sum(info["nan_pixels"] for info in self.images.values())

    def listing(self) -> List[Dict[str, Any]]:
        return sorted(self.artifacts, key=lambda a: a["path"])
