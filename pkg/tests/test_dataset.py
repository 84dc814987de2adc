import json

import pytest

from embedkit.dataset import (
    ClassCatalog,
    DatasetManifest,
    ManifestItem,
    check_alignment,
    load_catalog,
    load_manifest,
    save_manifest,
    split_view,
)
from embedkit.errors import AlignmentError, IntegrityError, ParseError

from conftest import make_store


def write_manifest(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")


def test_load_minimal(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest(path, [{"id": "a", "class": "c1", "split": "train"}])
    m = load_manifest(path)
    assert len(m) == 1
    assert m.classes == ["c1"]


def test_class_order_is_first_appearance(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest(path, [
        {"id": "a", "class": "z", "split": "train"},
        {"id": "b", "class": "a", "split": "train"},
        {"id": "c", "class": "z", "split": "val"},
    ])
    m = load_manifest(path)
    assert m.classes == ["z", "a"]
    assert m.class_index("z") == 0
    assert m.class_index("a") == 1


def test_duplicate_id_rejected(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest(path, [
        {"id": "a", "class": "c", "split": "train"},
        {"id": "a", "class": "c", "split": "val"},
    ])
    with pytest.raises(IntegrityError):
        load_manifest(path)


def test_malformed_line_reports_number(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"id": "a", "class": "c", "split": "train"}\nnot json\n')
    with pytest.raises(ParseError) as exc:
        load_manifest(path)
    assert exc.value.line == 2


def test_unknown_split_token(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest(path, [{"id": "a", "class": "c", "split": "holdout"}])
    with pytest.raises(ParseError):
        load_manifest(path)


def test_load_is_deterministic(tmp_path):
    path = tmp_path / "m.jsonl"
    rows = [{"id": f"i{i}", "class": f"c{i % 3}", "split": "train"}
            for i in range(20)]
    write_manifest(path, rows)
    assert load_manifest(path).items == load_manifest(path).items


def test_save_roundtrip(tmp_path):
    m = DatasetManifest(
        items=[ManifestItem("a", "c1", "train"), ManifestItem("b", "c2", "test")],
        classes=["c1", "c2"],
    )
    path = tmp_path / "m.jsonl"
    save_manifest(m, path)
    loaded = load_manifest(path)
    assert loaded.items == m.items
    assert loaded.classes == m.classes


class TestSplitView:
    def test_split_sizes(self, tight_corpus):
        _, _, m = tight_corpus
        assert len(split_view(m, "train")) == 200
        assert len(split_view(m, "val")) == 100
        assert len(split_view(m, "test")) == 100

    def test_empty_manifest(self):
        m = DatasetManifest(items=[], classes=[])
        assert split_view(m, "test") == []

    def test_splits_partition_items(self, tight_corpus):
        _, _, m = tight_corpus
        union = (split_view(m, "train") + split_view(m, "val")
                 + split_view(m, "test"))
        assert sorted(i.id for i in union) == sorted(i.id for i in m.items)

    def test_unknown_split(self, tight_corpus):
        _, _, m = tight_corpus
        with pytest.raises(ValueError):
            split_view(m, "dev")


class TestAlignment:
    def test_aligned(self):
        m = DatasetManifest(items=[ManifestItem("a", "c", "train")], classes=["c"])
        s = make_store([[1.0, 0.0]], ids=["a"])
        report = check_alignment(m, s)
        assert report.aligned

    def test_missing_from_store(self):
        m = DatasetManifest(
            items=[ManifestItem("a", "c", "train"), ManifestItem("b", "c", "val")],
            classes=["c"],
        )
        s = make_store([[1.0, 0.0]], ids=["a"])
        report = check_alignment(m, s)
        assert not report.aligned
        assert report.missing_in_store == ["b"]

    def test_orphan_in_store(self):
        m = DatasetManifest(items=[ManifestItem("a", "c", "train")], classes=["c"])
        s = make_store([[1.0, 0.0], [0.0, 1.0]], ids=["a", "extra"])
        report = check_alignment(m, s)
        assert report.orphans_in_store == ["extra"]
        assert report.missing_in_store == []


class TestCatalog:
    def test_load_and_validate(self, tmp_path):
        m = DatasetManifest(items=[ManifestItem("a", "c1", "train")],
                            classes=["c1"])
        path = tmp_path / "d.json"
        path.write_text(json.dumps({"c1": "a painting"}))
        catalog = load_catalog(path)
        catalog.validate_against(m)

    def test_missing_class(self):
        m = DatasetManifest(items=[ManifestItem("a", "c1", "train")],
                            classes=["c1"])
        with pytest.raises(AlignmentError):
            ClassCatalog({}).validate_against(m)

    def test_empty_description(self):
        m = DatasetManifest(items=[ManifestItem("a", "c1", "train")],
                            classes=["c1"])
        with pytest.raises(IntegrityError):
            ClassCatalog({"c1": ""}).validate_against(m)
