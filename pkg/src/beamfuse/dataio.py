"""On-disk dataset format.

Tensor files: magic "AMBT", dtype u8 (0 = f32, 1 = f64, 2 = interleaved
complex f32), rank u8, extents u32 each, row-major little-endian payload.

A dataset directory holds manifest.csv plus one tensor file per modality
per sample window. Manifest columns: seq, t, gps, img, lidar, radar, beam,
beam_label, avail, scenario, with file paths relative to the dataset root.
The beam column points at the window's history indices; the label column
holds the ground-truth beam for frame t.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .scenario import SampleWindow

MAGIC = b"AMBT"
MANIFEST_COLUMNS = ["seq", "t", "gps", "img", "lidar", "radar", "beam",
                    "beam_label", "avail", "scenario"]


class DataError(Exception):
    pass


def write_tensor(path: str | Path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    if arr.dtype == np.float32:
        code, payload = 0, arr.astype("<f4")
    elif arr.dtype == np.float64:
        code, payload = 1, arr.astype("<f8")
    elif arr.dtype == np.complex64:
        code = 2
        payload = np.empty(arr.shape + (2,), dtype="<f4")
        payload[..., 0] = arr.real
        payload[..., 1] = arr.imag
    else:
        raise DataError(f"unsupported tensor dtype {arr.dtype}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BB", code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(payload.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()

    def fail(offset: int, why: str):
        raise DataError(f"{path}: {why} at offset {offset}")

    if blob[:4] != MAGIC:
        fail(0, f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 6:
        fail(len(blob), "truncated header")
    code, rank = struct.unpack_from("<BB", blob, 4)
    pos = 6
    if pos + 4 * rank > len(blob):
        fail(pos, "truncated dims")
    dims = struct.unpack_from(f"<{rank}I", blob, pos)
    pos += 4 * rank
    n = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if code == 0:
        need, load = 4 * n, lambda: np.frombuffer(
            blob, "<f4", n, pos).reshape(dims).astype(np.float32)
    elif code == 1:
        need, load = 8 * n, lambda: np.frombuffer(
            blob, "<f8", n, pos).reshape(dims).astype(np.float64)
    elif code == 2:
        def load():
            flat = np.frombuffer(blob, "<f4", 2 * n, pos).reshape(dims + (2,))
            return (flat[..., 0] + 1j * flat[..., 1]).astype(np.complex64)
        need = 8 * n
    else:
        fail(4, f"unknown dtype code {code}")
    if pos + need != len(blob):
        fail(pos, f"payload size {len(blob) - pos}, expected {need}")
    return load()


# ----------------------------------------------------------------------

def _window_paths(w: SampleWindow) -> dict[str, str]:
    stem = f"data/s{w.seq:04d}_t{w.t:03d}"
    return {"gps": f"{stem}_gps.ambt", "img": f"{stem}_img.ambt",
            "lidar": f"{stem}_lidar.ambt", "radar": f"{stem}_radar.ambt",
            "beam": f"{stem}_beam.ambt"}


def write_dataset(windows: list[SampleWindow], out_dir: str | Path) -> list[dict]:
    """Write windows and manifest.csv; returns the manifest rows."""
    out = Path(out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    rows = []
    for w in windows:
        paths = _window_paths(w)
        write_tensor(out / paths["gps"], w.gps.astype(np.float64))
        write_tensor(out / paths["img"], w.image.astype(np.float32))
        write_tensor(out / paths["lidar"], w.lidar.astype(np.float32))
        write_tensor(out / paths["radar"], w.radar.astype(np.complex64))
        write_tensor(out / paths["beam"], w.beam_history.astype(np.float32))
        rows.append({
            "seq": w.seq, "t": w.t, **paths,
            "beam_label": w.beam_label,
            "avail": "".join(str(int(f)) for f in w.avail),
            "scenario": w.scenario,
        })
    with open(out / "manifest.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def read_manifest(data_dir: str | Path) -> list[dict]:
    path = Path(data_dir) / "manifest.csv"
    if not path.exists():
        raise DataError(f"no manifest at {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_COLUMNS:
            raise DataError(
                f"{path}: unexpected columns {reader.fieldnames}")
        return list(reader)


def read_dataset(data_dir: str | Path) -> list[SampleWindow]:
    root = Path(data_dir)
    windows = []
    for row in read_manifest(root):
        avail = np.array([int(c) for c in row["avail"]], dtype=np.int64)
        if avail.size != 5:
            raise DataError(
                f"{root}: avail flags must be 5 characters, got {row['avail']!r}")
        windows.append(SampleWindow(
            seq=int(row["seq"]), t=int(row["t"]),
            image=read_tensor(root / row["img"]),
            lidar=read_tensor(root / row["lidar"]),
            radar=read_tensor(root / row["radar"]),
            gps=read_tensor(root / row["gps"]),
            beam_history=read_tensor(root / row["beam"]).astype(np.int64),
            beam_label=int(row["beam_label"]),
            avail=avail,
            scenario=row["scenario"],
        ))
    return windows
