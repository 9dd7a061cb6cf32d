from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from ..errors import DataError, GeometryError

MODALITIES = ("image", "cognitive", "biomarker")


class Geometry(NamedTuple):
    h: int = 32
    w: int = 32
    T_c: int = 6
    f_c: int = 3
    T_b: int = 4
    f_b: int = 3

    def validate(self):
        if self.h != self.w or self.h < 8 or self.h % 8:
            raise GeometryError(f"image must be square with side divisible by 8, got {self.h}x{self.w}")
        if min(self.T_c, self.f_c, self.T_b, self.f_b) < 1:
            raise GeometryError(f"sequence dimensions must be >= 1, got {tuple(self)}")
        return self

    def shape(self, modality):
        if modality == "image":
            return (self.h, self.w, 3)
        if modality == "cognitive":
            return (self.T_c, self.f_c)
        if modality == "biomarker":
            return (self.T_b, self.f_b)
        raise KeyError(modality)


DEFAULT_GEOMETRY = Geometry()


@dataclass
class SubjectRecord:
    subject_id: str
    label: int
    image: np.ndarray | None = None
    cognitive: np.ndarray | None = None
    biomarker: np.ndarray | None = None

    def get(self, modality):
        return getattr(self, modality)

    def present(self):
        return tuple(m for m in MODALITIES if self.get(m) is not None)


@dataclass
class TrimodalDataset:
    records: list
    geometry: Geometry = DEFAULT_GEOMETRY
    provenance: str = ""
    seed: int | None = None
    normalized_with: str | None = None
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        ids = [r.subject_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate subject ids")
        for r in self.records:
            if r.label not in (0, 1):
                raise DataError(f"{r.subject_id}: label must be 0 or 1")
            if not r.present():
                raise DataError(f"{r.subject_id}: no modality present")
            for m in r.present():
                if r.get(m).shape != self.geometry.shape(m):
                    raise GeometryError(
                        f"{r.subject_id}: {m} shape {list(r.get(m).shape)} != {list(self.geometry.shape(m))}"
                    )
        self._index = {r.subject_id: i for i, r in enumerate(self.records)}

    def __len__(self):
        return len(self.records)

    def __getitem__(self, subject_id):
        return self.records[self._index[subject_id]]

    @property
    def ids(self):
        return [r.subject_id for r in self.records]

    @property
    def labels(self):
        return np.array([r.label for r in self.records], dtype=np.int64)

    def arrays(self, modality):
        """(ids, X, y) over the subjects that have ``modality``."""
        recs = [r for r in self.records if r.get(modality) is not None]
        X = np.stack([r.get(modality) for r in recs]) if recs else np.zeros((0,) + self.geometry.shape(modality))
        return [r.subject_id for r in recs], X, np.array([r.label for r in recs], dtype=np.int64)

    def subset(self, ids):
        return replace(self, records=[self[i] for i in ids])

    def drop_modality(self, modality):
        recs = [replace(r, **{modality: None}) for r in self.records]
        return replace(self, records=[r for r in recs if r.present()])
