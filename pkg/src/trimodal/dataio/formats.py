"""PGM images, manifest and sequence CSVs."""

import csv
import os
from pathlib import Path

import numpy as np

from .. import errors as E
from .dataset import MODALITIES, Geometry, SubjectRecord, TrimodalDataset

MANIFEST_HEADER = ["subject_id", "image_path", "label"]


def write_pgm(path, pixels):
    """Write a [h, w] array of values in [0, 1] as binary P5 with maxval 255."""
    a = np.asarray(pixels, dtype=np.float64)
    h, w = a.shape
    data = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def _pgm_tokens(buf, count, pos):
    tokens = []
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise E.TruncatedError("truncated PGM header")
        tokens.append(buf[start:pos])
    return tokens, pos


def read_pgm(path, where=""):
    """Return [h, w] pixel values scaled to [0, 1]."""
    tag = f"{where}: " if where else ""
    try:
        buf = Path(path).read_bytes()
    except FileNotFoundError:
        raise E.MissingFileError(f"{tag}missing file {path}") from None
    if buf[:2] != b"P5":
        raise E.BadMagicError(f"{tag}bad magic {buf[:2]!r} in {path} (expected P5)")
    (w, h, maxval), pos = _pgm_tokens(buf, 3, 2)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise E.LoadError(f"{tag}malformed PGM header in {path}") from None
    if maxval != 255:
        raise E.BadMaxvalError(f"{tag}maxval {maxval} != 255 in {path}")
    if w != h:
        raise E.NonSquareError(f"{tag}non-square image {w}x{h} in {path}")
    pos += 1  # single whitespace after maxval
    data = buf[pos:pos + w * h]
    if len(data) < w * h:
        raise E.TruncatedError(f"{tag}truncated pixel data in {path}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


def check_image_geometry(images):
    side = images.shape[1]
    if side < 8 or side % 8:
        raise E.GeometryError(f"image side {side} is not a positive multiple of 8")


def load_image_dataset(manifest_path, validate_geometry=True):
    """Read ``subject_id,image_path,label`` rows; returns (ids, images [N, h, w, 3], labels).

    Paths are relative to the manifest. Grey levels are replicated to three channels.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise E.MissingFileError(f"missing manifest {manifest_path}")
    ids, imgs, labels = [], [], []
    with open(manifest_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise E.LoadError(f"{manifest_path}: header must be {','.join(MANIFEST_HEADER)}, got {header}")
        for rowno, row in enumerate(reader, start=2):
            where = f"{manifest_path.name} row {rowno}"
            if len(row) != 3:
                raise E.LoadError(f"{where}: expected 3 fields, got {len(row)}")
            sid, rel, lab = row
            if lab not in ("0", "1"):
                raise E.BadLabelError(f"{where}: label {lab!r} not in {{0,1}}")
            pix = read_pgm(manifest_path.parent / rel, where)
            if imgs and pix.shape != imgs[0].shape[:2]:
                raise E.GeometryError(f"{where}: image size {pix.shape} differs from {imgs[0].shape[:2]}")
            ids.append(sid)
            imgs.append(np.repeat(pix[:, :, None], 3, axis=2))
            labels.append(int(lab))
    images = np.stack(imgs) if imgs else np.zeros((0, 0, 0, 3))
    if validate_geometry and imgs:
        check_image_geometry(images)
    return ids, images, np.array(labels, dtype=np.int64)


def sequence_header(k):
    return ["subject_id", "t"] + [f"f{j + 1}" for j in range(k)] + ["label"]


def load_sequence_dataset(csv_path, modality="cognitive"):
    """Read ``subject_id,t,f1..fk,label`` rows into (ids, X [N, T, k], labels)."""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise E.MissingFileError(f"missing {modality} file {csv_path}")
    rows = {}
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or len(header) < 4 or header != sequence_header(len(header) - 3):
            raise E.LoadError(f"{csv_path}: header must be subject_id,t,f1..fk,label, got {header}")
        k = len(header) - 3
        for rowno, row in enumerate(reader, start=2):
            if len(row) != k + 3:
                raise E.LoadError(f"{csv_path.name} row {rowno}: expected {k + 3} fields, got {len(row)}")
            sid = row[0]
            where = f"{csv_path.name} row {rowno} (subject {sid})"
            try:
                t = int(row[1])
                feats = [float(v) for v in row[2:2 + k]]
            except ValueError:
                raise E.NonNumericError(f"{where}: non-numeric value") from None
            if not all(np.isfinite(feats)):
                raise E.NonNumericError(f"{where}: non-finite value")
            lab = row[-1]
            if lab not in ("0", "1"):
                raise E.BadLabelError(f"{where}: label {lab!r} not in {{0,1}}")
            entry = rows.setdefault(sid, {"label": int(lab), "steps": {}})
            if entry["label"] != int(lab):
                raise E.InconsistentLabelError(f"{where}: label {lab} contradicts earlier label {entry['label']}")
            if t in entry["steps"]:
                raise E.RaggedTimestepsError(f"{where}: duplicate timestep {t}")
            entry["steps"][t] = feats
    ids, seqs, labels = [], [], []
    T = None
    for sid, entry in rows.items():
        steps = entry["steps"]
        if T is None:
            T = len(steps)
        if sorted(steps) != list(range(T)):
            raise E.RaggedTimestepsError(
                f"{csv_path.name} subject {sid}: timesteps {sorted(steps)} are not 0..{T - 1}"
            )
        ids.append(sid)
        seqs.append(np.array([steps[t] for t in range(T)], dtype=np.float64))
        labels.append(entry["label"])
    X = np.stack(seqs) if seqs else np.zeros((0, 0, 0))
    return ids, X, np.array(labels, dtype=np.int64)


def write_sequence_csv(path, ids, X, labels):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(sequence_header(X.shape[2]))
        for sid, seq, lab in zip(ids, X, labels):
            for t, feats in enumerate(seq):
                w.writerow([sid, t] + [repr(float(v)) for v in feats] + [int(lab)])


def export_dataset(ds, root):
    """Write images/<id>.pgm, manifest.csv, cognitive.csv and biomarker.csv under ``root``."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    ids, X, y = ds.arrays("image")
    with open(root / "manifest.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for sid, img, lab in zip(ids, X, y):
            rel = f"images/{sid}.pgm"
            write_pgm(root / rel, img[:, :, 0])
            w.writerow([sid, rel, int(lab)])
    for m in ("cognitive", "biomarker"):
        write_sequence_csv(root / f"{m}.csv", *ds.arrays(m))
    return root


def assemble_dataset(image=None, cognitive=None, biomarker=None, provenance="files", seed=None):
    """Join per-modality (ids, X, labels) triples on subject id."""
    parts = {"image": image, "cognitive": cognitive, "biomarker": biomarker}
    by_id = {}
    order = []
    for m, part in parts.items():
        if part is None:
            continue
        for sid, x, lab in zip(*part):
            if sid not in by_id:
                by_id[sid] = {"label": int(lab)}
                order.append(sid)
            elif by_id[sid]["label"] != int(lab):
                raise E.DataError(f"subject {sid}: {m} label {lab} disagrees with another modality")
            by_id[sid][m] = x
    dims = {}
    for m, part in parts.items():
        dims[m] = part[1].shape[1:] if part is not None and len(part[1]) else None
    h = dims["image"][0] if dims["image"] else 8
    tc, fc = dims["cognitive"] if dims["cognitive"] else (1, 1)
    tb, fb = dims["biomarker"] if dims["biomarker"] else (1, 1)
    geometry = Geometry(h, h, tc, fc, tb, fb)
    records = [
        SubjectRecord(sid, d["label"], *(d.get(m) for m in MODALITIES)) for sid, d in ((s, by_id[s]) for s in order)
    ]
    return TrimodalDataset(records, geometry, provenance, seed)


def load_dataset_dir(root, seed=None):
    """Load whatever of manifest.csv / cognitive.csv / biomarker.csv exists under ``root``."""
    root = Path(root)
    parts = {}
    if (root / "manifest.csv").exists():
        parts["image"] = load_image_dataset(root / "manifest.csv")
    for m in ("cognitive", "biomarker"):
        if (root / f"{m}.csv").exists():
            parts[m] = load_sequence_dataset(root / f"{m}.csv", m)
    if not parts:
        raise E.MissingFileError(f"no dataset files under {os.fspath(root)}")
    return assemble_dataset(**parts, provenance=f"files:{root.name}", seed=seed)
