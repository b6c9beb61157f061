"""Face detectors: sidecar annotations (deterministic) or OpenCV Haar cascade."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class DetectorError(RuntimeError):
    pass


class SidecarDetector:
    """Boxes from a JSON sidecar mapping frame file names to [x, y, w, h] lists.

    Frames absent from the sidecar have no faces. This is the deterministic
    default; it also serves setups where an external detector already ran.
    """

    name = "sidecar"

    def __init__(self, sidecar: Path):
        try:
            raw = json.loads(Path(sidecar).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise DetectorError(f"cannot read sidecar {sidecar}: {err}") from err
        if not isinstance(raw, dict):
            raise DetectorError("sidecar must map frame names to box lists")
        self.boxes = {
            name: [tuple(int(v) for v in box) for box in boxes]
            for name, boxes in raw.items()
        }
        self.version = "1"

    def detect(self, image, frame_name: str) -> list[tuple[int, int, int, int]]:
        return list(self.boxes.get(frame_name, []))


class HaarDetector:
    """OpenCV frontal-face Haar cascade bundled with opencv-python."""

    name = "haar-frontalface"

    def __init__(self):
        try:
            import cv2
        except ImportError as err:
            raise DetectorError(f"opencv not installed: {err}") from err
        if not hasattr(cv2, "CascadeClassifier"):
            # OpenCV 5 dropped the legacy Haar API from the main namespace
            raise DetectorError(
                f"this OpenCV build ({cv2.__version__}) lacks CascadeClassifier; "
                "use the sidecar detector or install opencv-python 4.x"
            )
        self._cv2 = cv2
        path = Path(cv2.data.haarcascades) / "haarcascade_frontalface_default.xml"
        if not path.exists():
            raise DetectorError(f"cascade file missing: {path}")
        self.cascade = cv2.CascadeClassifier(str(path))
        if self.cascade.empty():
            raise DetectorError(f"cannot load cascade from {path}")
        self.version = cv2.__version__

    def detect(self, image, frame_name: str) -> list[tuple[int, int, int, int]]:
        gray = self._cv2.cvtColor(np.asarray(image.convert("RGB")), self._cv2.COLOR_RGB2GRAY)
        found = self.cascade.detectMultiScale(gray, scaleFactor=1.1, minNeighbors=5)
        return [tuple(int(v) for v in box) for box in found]


def make_detector(name: str, sidecar: Path | None = None):
    if name == "sidecar":
        if sidecar is None:
            raise DetectorError("the sidecar detector needs a sidecar file path")
        return SidecarDetector(sidecar)
    if name == "haar":
        return HaarDetector()
    raise DetectorError(f"unknown detector {name!r}; choose from ['sidecar', 'haar']")
