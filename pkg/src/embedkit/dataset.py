"""Dataset manifests, class catalogs, split views, store alignment checks.

Manifest format: JSON Lines, one object per line:
``{"id": "...", "class": "...", "split": "train"|"val"|"test"}``.
Class catalog: a single JSON object ``{class_id: description}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import AlignmentError, IntegrityError, ParseError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestItem:
    id: str
    class_id: str
    split: str


@dataclass
class DatasetManifest:
    """Ordered items plus the class catalog order.

    Class order is first-appearance order in the manifest file; it fixes
    the classifier's output-layer index mapping across runs.
    """

    items: list[ManifestItem]
    classes: list[str]
    _class_index: dict[str, int] = field(init=False, repr=False)
    _item_index: dict[str, ManifestItem] = field(init=False, repr=False)

    def __post_init__(self):
        self._class_index = {}
        for c in self.classes:
            if not c:
                raise IntegrityError("empty class id")
            if c in self._class_index:
                raise IntegrityError(f"duplicate class {c!r}")
            self._class_index[c] = len(self._class_index)
        self._item_index = {}
        for item in self.items:
            if not item.id:
                raise IntegrityError("empty item id")
            if item.id in self._item_index:
                raise IntegrityError(f"duplicate item id {item.id!r}")
            if item.class_id not in self._class_index:
                raise IntegrityError(
                    f"item {item.id!r} has unknown class {item.class_id!r}"
                )
            if item.split not in SPLITS:
                raise IntegrityError(f"item {item.id!r} has bad split {item.split!r}")
            self._item_index[item.id] = item

    def class_index(self, class_id: str) -> int:
        return self._class_index[class_id]

    def item(self, item_id: str) -> ManifestItem:
        try:
            return self._item_index[item_id]
        except KeyError:
            raise KeyError(f"id {item_id!r} not in manifest") from None

    def __contains__(self, item_id):
        return item_id in self._item_index

    def __len__(self):
        return len(self.items)


def split_view(manifest: DatasetManifest, split: str) -> list[ManifestItem]:
    """Items of one split, manifest order. Empty list if none."""
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    return [it for it in manifest.items if it.split == split]


def load_manifest(path) -> DatasetManifest:
    """Parse a JSON Lines manifest; class order = first appearance."""
    items: list[ManifestItem] = []
    classes: list[str] = []
    seen_classes: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON: {exc}", line=lineno)
            if not isinstance(obj, dict):
                raise ParseError(f"line {lineno}: expected an object", line=lineno)
            try:
                item_id, class_id, split = obj["id"], obj["class"], obj["split"]
            except KeyError as exc:
                raise ParseError(f"line {lineno}: missing key {exc}", line=lineno)
            if split not in SPLITS:
                raise ParseError(
                    f"line {lineno}: unknown split {split!r}", line=lineno
                )
            if not item_id or not class_id:
                raise ParseError(f"line {lineno}: empty id or class", line=lineno)
            if class_id not in seen_classes:
                seen_classes.add(class_id)
                classes.append(class_id)
            items.append(ManifestItem(id=item_id, class_id=class_id, split=split))
    return DatasetManifest(items=items, classes=classes)


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in manifest.items:
            fh.write(
                json.dumps(
                    {"id": item.id, "class": item.class_id, "split": item.split},
                    ensure_ascii=False,
                )
                + "\n"
            )


@dataclass
class ClassCatalog:
    """One nonempty description per class; must cover the manifest exactly."""

    descriptions: dict[str, str]

    def validate_against(self, manifest: DatasetManifest) -> None:
        manifest_classes = set(manifest.classes)
        catalog_classes = set(self.descriptions)
        missing = sorted(manifest_classes - catalog_classes)
        extra = sorted(catalog_classes - manifest_classes)
        if missing or extra:
            raise AlignmentError(
                f"catalog/manifest class mismatch: missing {missing[:5]}, "
                f"extra {extra[:5]}"
            )
        for class_id, text in self.descriptions.items():
            if not text:
                raise IntegrityError(f"empty description for class {class_id!r}")


def load_catalog(path) -> ClassCatalog:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}")
    if not isinstance(obj, dict) or not all(
        isinstance(v, str) for v in obj.values()
    ):
        raise ParseError(f"{path}: expected an object of class -> description")
    return ClassCatalog(descriptions=obj)


@dataclass
class AlignmentReport:
    missing_in_store: list[str]
    orphans_in_store: list[str]

    @property
    def aligned(self) -> bool:
        return not self.missing_in_store and not self.orphans_in_store

    def to_dict(self) -> dict:
        return {
            "aligned": self.aligned,
            "missing_in_store": self.missing_in_store,
            "orphans_in_store": self.orphans_in_store,
        }


def check_alignment(manifest: DatasetManifest, store) -> AlignmentReport:
    """Report-only comparison of manifest ids vs store ids."""
    store_ids = set(store.ids)
    manifest_ids = {it.id for it in manifest.items}
    return AlignmentReport(
        missing_in_store=[it.id for it in manifest.items if it.id not in store_ids],
        orphans_in_store=[i for i in store.ids if i not in manifest_ids],
    )
