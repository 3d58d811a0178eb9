"""Class mappings between taxonomies, stored as two-column text tables."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .. import classes as C
from ..pointcloud import LabeledPointCloud


class ClassMappingError(ValueError):
    pass


@dataclass(frozen=True)
class ClassMapping:
    """Function from source class ids to target class ids.

    ``target_names[k]`` names target id ``k``. Unlabeled points (255) are
    passed through untouched by :func:`map_classes`.
    """

    table: dict
    target_names: tuple
    source_names: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        table = {int(k): int(v) for k, v in self.table.items()}
        for s, t in table.items():
            if not 0 <= s < 255:
                raise ClassMappingError(f"source id {s} out of range")
            if not 0 <= t < len(self.target_names):
                raise ClassMappingError(f"source {s} maps to unknown target id {t}")
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "target_names", tuple(self.target_names))

    @classmethod
    def identity(cls, ids=tuple(C.CLASS_NAMES)) -> "ClassMapping":
        ids = sorted(int(i) for i in ids)
        names = [""] * (max(ids) + 1)
        for i in ids:
            names[i] = C.CLASS_NAMES.get(i, str(i))
        return cls({i: i for i in ids}, tuple(names), name="identity")

    @property
    def sources(self) -> tuple:
        return tuple(sorted(self.table))

    def unreached_targets(self) -> list[int]:
        """Target ids that no source maps onto (empty when the mapping is surjective)."""
        hit = set(self.table.values())
        return [t for t in range(len(self.target_names)) if t not in hit]

    def is_total_over(self, ids) -> bool:
        return all(int(i) in self.table for i in ids)

    def lookup(self) -> np.ndarray:
        """256-entry table; unmapped sources hold -1, 255 maps to itself."""
        lut = np.full(256, -1, np.int64)
        for s, t in self.table.items():
            lut[s] = t
        lut[C.UNLABELED] = C.UNLABELED
        return lut

    def apply(self, labels: np.ndarray) -> np.ndarray:
        labels = np.asarray(labels)
        if labels.size and (labels.min() < 0 or labels.max() > 255):
            raise ClassMappingError("labels must be in 0..255")
        lut = self.lookup()
        out = lut[labels.astype(np.int64)]
        bad = np.unique(labels[out < 0])
        if len(bad):
            which = ", ".join(f"{int(b)} ({C.CLASS_NAMES.get(int(b), '?')})" for b in bad)
            raise ClassMappingError(f"mapping {self.name or '<unnamed>'} has no entry for class {which}")
        return out.astype(np.uint8)


def map_classes(cloud: LabeledPointCloud, mapping: ClassMapping) -> LabeledPointCloud:
    """Relabel semantics through ``mapping``; geometry, colors and instances are kept."""
    return cloud.with_labels(mapping.apply(cloud.semantic), cloud.instance.copy())


def read_mapping(path: str | os.PathLike) -> ClassMapping:
    header: dict[str, str] = {}
    table: dict[int, int] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, val = line[1:].partition(":")
                if sep:
                    header.setdefault(key.strip(), val.strip())
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ClassMappingError(f"{path}:{lineno}: expected two integer columns")
            try:
                s, t = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise ClassMappingError(f"{path}:{lineno}: {exc}") from None
            if s in table and table[s] != t:
                raise ClassMappingError(f"{path}:{lineno}: source {s} mapped twice")
            table[s] = t
    if "target_names" not in header:
        raise ClassMappingError(f"{path}: missing '# target_names:' header")
    names = tuple(n.strip() for n in header["target_names"].split(","))
    src = {s: C.CLASS_NAMES.get(s, str(s)) for s in table}
    return ClassMapping(table, names, src, header.get("target", os.path.basename(str(path))))


def write_mapping(path: str | os.PathLike, mapping: ClassMapping, comments=()) -> None:
    with open(path, "w") as fh:
        fh.write(f"# target: {mapping.name}\n")
        fh.write(f"# target_names: {','.join(mapping.target_names)}\n")
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write("# source_id target_id\n")
        for s in mapping.sources:
            fh.write(f"{s} {mapping.table[s]}\n")


def _bundled(name: str) -> ClassMapping:
    with resources.as_file(resources.files("aerialsynth") / "data" / "mappings" / name) as p:
        return read_mapping(p)


def synthetic_to_real6() -> ClassMapping:
    """Fine synthetic classes onto the six classes of the real-world benchmark."""
    return _bundled("synthetic18_to_real6.txt")


def instance14_to_9() -> ClassMapping:
    """Fourteen instance classes onto the reduced nine-class instance taxonomy."""
    return _bundled("instance14_to_9.txt")
