"""Export operations: tweets to vectors, media to frame and face vectors.

Outputs are exactly the line-record vector format the pipeline's embedding
store loads: {id, t, kind, vec}, with face records carrying frame_id. A
manifest (inputs, encoder identifiers and versions, outputs, sampling rate)
is written alongside every export for provenance. Files are written
atomically via a temp file and rename.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detectors import DetectorError
from .encoders import EncoderError

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")
VIDEO_SUFFIXES = (".mp4", ".avi", ".mkv", ".mov", ".webm")

_TRAILING_INT_RE = re.compile(r"(\d+)$")


class ExportError(RuntimeError):
    pass


@dataclass
class ExportManifest:
    inputs: list[str]
    encoders: dict[str, dict[str, str]]
    outputs: list[str]
    sampling_rate_hz: float | None = None

    def write(self, path: Path) -> None:
        payload = {
            "inputs": self.inputs,
            "encoders": self.encoders,
            "outputs": self.outputs,
            "sampling_rate_hz": self.sampling_rate_hz,
        }
        _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


@dataclass
class ExportResult:
    records: int
    skipped: list[str] = field(default_factory=list)
    flagged_frames: list[str] = field(default_factory=list)
    manifest_path: Path | None = None


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _dump(records: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def _encoder_stamp(encoder) -> dict[str, str]:
    return {"name": encoder.name, "version": str(encoder.version)}


def manifest_path_for(output: Path) -> Path:
    return output.with_name(output.name + ".manifest.json")


def export_tweets(messages_path: Path, out_path: Path, encoder) -> ExportResult:
    """One vector per message id; items the encoder rejects are skipped and
    logged so a single bad tweet never sinks the export."""
    messages_path = Path(messages_path)
    if not messages_path.exists():
        raise ExportError(f"missing messages file: {messages_path}")
    records: list[dict] = []
    skipped: list[str] = []
    dim: int | None = None
    for line_no, line in enumerate(messages_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            log.warning("line %d: not JSON, skipped", line_no)
            skipped.append(f"line {line_no}")
            continue
        msg_id = msg.get("id")
        if not isinstance(msg_id, str) or not msg_id:
            log.warning("line %d: missing id, skipped", line_no)
            skipped.append(f"line {line_no}")
            continue
        try:
            vec = np.asarray(encoder.encode(str(msg.get("text", ""))), dtype=np.float64)
        except EncoderError as err:
            log.warning("message %s: %s (skipped)", msg_id, err)
            skipped.append(msg_id)
            continue
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise ExportError(
                f"encoder produced dimension {vec.shape[0]} for {msg_id!r}, expected {dim}"
            )
        records.append(
            {
                "id": msg_id,
                "t": int(msg.get("t", 0)),
                "kind": "tweet",
                "vec": [float(x) for x in vec],
            }
        )
    out_path = Path(out_path)
    _atomic_write(out_path, _dump(records))
    manifest = ExportManifest(
        inputs=[str(messages_path)],
        encoders={"text": _encoder_stamp(encoder)},
        outputs=[str(out_path)],
    )
    mpath = manifest_path_for(out_path)
    manifest.write(mpath)
    return ExportResult(records=len(records), skipped=skipped, manifest_path=mpath)


def _frames_from_directory(source: Path):
    """Yield (second, name, PIL image) for still frames assumed sampled at 1 Hz.

    A trailing integer in the file stem gives the frame's second; otherwise
    the sorted position is used. An unreadable image aborts the export.
    """
    from PIL import Image, UnidentifiedImageError

    files = sorted(p for p in source.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    stems = [_TRAILING_INT_RE.search(p.stem) for p in files]
    use_stem_numbers = files and all(stems)
    for index, path in enumerate(files):
        second = int(stems[index].group(1)) if use_stem_numbers else index
        try:
            with Image.open(path) as img:
                yield second, path.name, img.convert("RGB")
        except (UnidentifiedImageError, OSError) as err:
            raise ExportError(f"cannot decode frame {path}: {err}") from err


def _frames_from_video(source: Path):
    """Sample a video at one frame per second via OpenCV."""
    try:
        import cv2
        from PIL import Image
    except ImportError as err:
        raise ExportError(f"video input needs opencv and Pillow: {err}") from err
    capture = cv2.VideoCapture(str(source))
    if not capture.isOpened():
        raise ExportError(f"cannot decode video {source}")
    fps = capture.get(cv2.CAP_PROP_FPS) or 0.0
    if fps <= 0:
        raise ExportError(f"video {source} reports no frame rate")
    total = int(capture.get(cv2.CAP_PROP_FRAME_COUNT))
    for second in range(int(total / fps)):
        capture.set(cv2.CAP_PROP_POS_FRAMES, int(round(second * fps)))
        ok, frame = capture.read()
        if not ok:
            break
        rgb = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
        yield second, f"{source.stem}@{second}", Image.fromarray(rgb)
    capture.release()


def export_frames_and_faces(
    source: Path,
    out_frames: Path,
    out_faces: Path,
    image_encoder,
    face_encoder,
    detector,
    start_epoch: int = 0,
) -> ExportResult:
    """Frame vectors at 1 Hz plus face records linked by frame_id.

    Frames holding more than 5 detected faces are flagged (`crowded` field on
    the frame record); their faces are still exported and the weak labeler
    discards them downstream.
    """
    source = Path(source)
    if source.is_dir():
        frames_iter = _frames_from_directory(source)
    elif source.suffix.lower() in VIDEO_SUFFIXES and source.exists():
        frames_iter = _frames_from_video(source)
    elif source.exists():
        raise ExportError(f"unsupported media input: {source}")
    else:
        raise ExportError(f"missing media input: {source}")

    frame_records: list[dict] = []
    face_records: list[dict] = []
    flagged: list[str] = []
    skipped: list[str] = []
    for second, name, image in frames_iter:
        frame_id = f"frame_{second:06d}"
        t = start_epoch + second
        record = {
            "id": frame_id,
            "t": t,
            "kind": "frame",
            "vec": [float(x) for x in image_encoder.encode(image)],
        }
        try:
            boxes = detector.detect(image, name)
        except DetectorError as err:
            raise ExportError(f"face detection failed on {name}: {err}") from err
        if len(boxes) > 5:
            record["crowded"] = True
            flagged.append(frame_id)
            log.warning("frame %s has %d faces, flagged", frame_id, len(boxes))
        frame_records.append(record)
        for i, (x, y, w, h) in enumerate(boxes):
            face_id = f"{frame_id}_face{i}"
            crop = image.crop((x, y, x + w, y + h))
            if crop.width == 0 or crop.height == 0:
                log.warning("face %s has an empty box, skipped", face_id)
                skipped.append(face_id)
                continue
            try:
                vec = face_encoder.encode(crop)
            except EncoderError as err:
                log.warning("face %s: %s (skipped)", face_id, err)
                skipped.append(face_id)
                continue
            face_records.append(
                {
                    "id": face_id,
                    "t": t,
                    "kind": "face",
                    "vec": [float(v) for v in vec],
                    "frame_id": frame_id,
                }
            )

    out_frames, out_faces = Path(out_frames), Path(out_faces)
    _atomic_write(out_frames, _dump(frame_records))
    _atomic_write(out_faces, _dump(face_records))
    manifest = ExportManifest(
        inputs=[str(source)],
        encoders={
            "image": _encoder_stamp(image_encoder),
            "face": _encoder_stamp(face_encoder),
            "detector": {"name": detector.name, "version": str(detector.version)},
        },
        outputs=[str(out_frames), str(out_faces)],
        sampling_rate_hz=1.0,
    )
    mpath = manifest_path_for(out_frames)
    manifest.write(mpath)
    return ExportResult(
        records=len(frame_records) + len(face_records),
        skipped=skipped,
        flagged_frames=flagged,
        manifest_path=mpath,
    )
