import json

import numpy as np
import pytest

from core import bundle_io
from core.bundle_io import (
    MANIFEST,
    bundle_digest,
    convert_citation_dataset,
    file_sha256,
    load_bundle,
    load_edge_checkpoint,
    load_embeddings,
    load_interactions,
    load_reco_bundle,
    read_matrix,
    save_bundle,
    save_edge_checkpoint,
    save_embeddings,
    save_reco_bundle,
    write_report,
)
from core.edge_model import init_edge_params
from core.errors import BundleFormatError, ChecksumError, DataError, DimensionError
from core.reco import EmbeddingMatrix, Interactions


def refresh_checksum(directory, key):
    manifest = json.loads((directory / MANIFEST).read_text())
    manifest["checksums"][key] = file_sha256(directory / manifest["files"][key])
    (directory / MANIFEST).write_text(json.dumps(manifest))


def write_citation_files(directory, papers=1600):
    rng = np.random.default_rng(0)
    classes = ["Theory", "Neural_Networks"]
    with open(directory / "toy.content", "w") as f:
        for p in range(papers):
            words = " ".join(str(int(x)) for x in rng.integers(0, 2, 4))
            f.write(f"p{p}\t{words}\t{classes[p % 2]}\n")
    with open(directory / "toy.cites", "w") as f:
        for p in range(1, papers):
            f.write(f"p{p - 1}\tp{p}\n")
        f.write("p3\tp3\n")
        f.write("p3\tmissing\n")


class TestGraphBundle:
    def test_round_trip(self, tmp_path, small_dataset):
        save_bundle(small_dataset, tmp_path / "b")
        loaded = load_bundle(tmp_path / "b")
        np.testing.assert_array_equal(loaded.graph.row_offsets, small_dataset.graph.row_offsets)
        np.testing.assert_array_equal(loaded.graph.col_indices, small_dataset.graph.col_indices)
        np.testing.assert_array_equal(loaded.features, small_dataset.features)
        np.testing.assert_array_equal(loaded.labels.labels, small_dataset.labels.labels)
        np.testing.assert_array_equal(loaded.split.val, small_dataset.split.val)
        assert loaded.graph.symmetric

    def test_output_is_byte_identical(self, tmp_path, small_dataset):
        save_bundle(small_dataset, tmp_path / "a", extra={"seed": 1})
        save_bundle(small_dataset, tmp_path / "b", extra={"seed": 1})
        for name in ("manifest.json", "graph.tsv", "features.csv", "labels.tsv", "splits.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert bundle_digest(tmp_path / "a") == bundle_digest(tmp_path / "b")

    def test_symmetric_graph_stores_each_edge_once(self, tmp_path, small_dataset):
        manifest = save_bundle(small_dataset, tmp_path / "b")
        assert manifest["num_edge_lines"] == small_dataset.graph.undirected_edges().shape[0]

    def test_checksum_mismatch(self, tmp_path, small_dataset):
        save_bundle(small_dataset, tmp_path / "b")
        with open(tmp_path / "b" / "graph.tsv", "a") as f:
            f.write("0\t1\n")
        with pytest.raises(ChecksumError):
            load_bundle(tmp_path / "b")

    def test_malformed_line_reports_line_number(self, tmp_path, small_dataset):
        directory = tmp_path / "b"
        save_bundle(small_dataset, directory)
        lines = (directory / "graph.tsv").read_text().splitlines()
        lines[2] = "0\tx"
        (directory / "graph.tsv").write_text("\n".join(lines) + "\n")
        refresh_checksum(directory, "graph")
        with pytest.raises(BundleFormatError) as info:
            load_bundle(directory)
        assert info.value.line_number == 3

    def test_comment_lines_are_skipped(self, tmp_path, small_dataset):
        directory = tmp_path / "b"
        save_bundle(small_dataset, directory)
        text = (directory / "graph.tsv").read_text()
        (directory / "graph.tsv").write_text("# src\tdst\n" + text + "  # trailing note\n")
        refresh_checksum(directory, "graph")
        loaded = load_bundle(directory)
        np.testing.assert_array_equal(loaded.graph.col_indices, small_dataset.graph.col_indices)

    def test_undecodable_bytes(self, tmp_path, small_dataset):
        directory = tmp_path / "b"
        save_bundle(small_dataset, directory)
        (directory / "graph.tsv").write_bytes(b"0\t1\n\xff\xfe0\t1\n")
        refresh_checksum(directory, "graph")
        with pytest.raises(BundleFormatError) as info:
            load_bundle(directory)
        assert info.value.line_number == 2

    def test_random_bytes_only_raise_data_errors(self, tmp_path, small_dataset):
        directory = tmp_path / "b"
        save_bundle(small_dataset, directory)
        rng = np.random.default_rng(42)
        for key, name in (("graph", "graph.tsv"), ("labels", "labels.tsv"), ("features", "features.csv")):
            original = (directory / name).read_bytes()
            for _ in range(20):
                (directory / name).write_bytes(rng.integers(0, 256, int(rng.integers(1, 200)), dtype=np.uint8).tobytes())
                refresh_checksum(directory, key)
                try:
                    load_bundle(directory)
                except DataError:
                    pass
            (directory / name).write_bytes(original)
            refresh_checksum(directory, key)

    def test_manifest_not_utf8(self, tmp_path, small_dataset):
        save_bundle(small_dataset, tmp_path / "b")
        (tmp_path / "b" / MANIFEST).write_bytes(b"{\"format_version\": \xff}")
        with pytest.raises(BundleFormatError, match="UTF-8"):
            load_bundle(tmp_path / "b")

    def test_node_out_of_range(self, tmp_path, small_dataset):
        directory = tmp_path / "b"
        save_bundle(small_dataset, directory)
        with open(directory / "graph.tsv", "a") as f:
            f.write("0\t400\n")
        refresh_checksum(directory, "graph")
        with pytest.raises(BundleFormatError, match="outside"):
            load_bundle(directory)

    def test_missing_file(self, tmp_path, small_dataset):
        save_bundle(small_dataset, tmp_path / "b")
        (tmp_path / "b" / "labels.tsv").unlink()
        with pytest.raises(DataError, match="missing"):
            load_bundle(tmp_path / "b")

    def test_unsupported_version(self, tmp_path, small_dataset):
        save_bundle(small_dataset, tmp_path / "b")
        manifest = json.loads((tmp_path / "b" / MANIFEST).read_text())
        manifest["format_version"] = 99
        (tmp_path / "b" / MANIFEST).write_text(json.dumps(manifest))
        with pytest.raises(BundleFormatError, match="format_version"):
            load_bundle(tmp_path / "b")

    def test_binary_features_above_threshold(self, tmp_path, small_dataset, monkeypatch):
        monkeypatch.setattr(bundle_io, "BINARY_THRESHOLD", 10)
        manifest = save_bundle(small_dataset, tmp_path / "b")
        assert manifest["files"]["features"] == "features.bin"
        np.testing.assert_array_equal(load_bundle(tmp_path / "b").features, small_dataset.features)


class TestMatrices:
    def test_ragged_csv(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("1,2\n3\n")
        with pytest.raises(BundleFormatError) as info:
            read_matrix(path)
        assert info.value.line_number == 2

    def test_csv_not_utf8(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_bytes(b"1,2\n\xc3(,4\n")
        with pytest.raises(BundleFormatError, match="UTF-8"):
            read_matrix(path)

    def test_truncated_binary(self, tmp_path):
        path = tmp_path / "m.bin"
        path.write_bytes(bundle_io.MATRIX_MAGIC + (3).to_bytes(8, "little") + (2).to_bytes(8, "little") + b"\0" * 8)
        with pytest.raises(BundleFormatError, match="file size"):
            read_matrix(path)


class TestCitationConverter:
    def test_conversion_summary_and_split(self, tmp_path):
        write_citation_files(tmp_path)
        dataset, summary = convert_citation_dataset(tmp_path, "toy", seed=0)
        assert summary["num_nodes"] == 1600
        assert summary["classes"] == ["Neural_Networks", "Theory"]
        assert summary["citations"] == 1601
        assert summary["skipped_unknown_endpoint"] == 1
        assert summary["skipped_self_citation"] == 1
        assert summary["undirected_edges"] == 1599
        assert len(dataset.split.train) == 40
        assert (len(dataset.split.val), len(dataset.split.test)) == (500, 1000)
        assert dataset.labels.labels[0] == 1

    def test_too_few_nodes(self, tmp_path):
        write_citation_files(tmp_path, papers=100)
        with pytest.raises(DataError, match="too few"):
            convert_citation_dataset(tmp_path, "toy", seed=0)

    def test_missing_files(self, tmp_path):
        with pytest.raises(DataError, match="missing"):
            convert_citation_dataset(tmp_path, "toy", seed=0)


class TestInteractionsAndEmbeddings:
    def test_tsv_with_optional_weights(self, tmp_path):
        path = tmp_path / "i.tsv"
        path.write_text("0\t1\n2\t3\t2.5\n")
        inter = load_interactions(path)
        assert inter.users.tolist() == [0, 2]
        assert inter.weights.tolist() == [1.0, 2.5]

    def test_adjacency_format(self, tmp_path):
        path = tmp_path / "i.txt"
        path.write_text("0 4 5 6\n1 2\n")
        inter = load_interactions(path, fmt="adjacency")
        assert inter.users.tolist() == [0, 0, 0, 1]
        assert inter.items.tolist() == [4, 5, 6, 2]

    def test_bad_weight(self, tmp_path):
        path = tmp_path / "i.tsv"
        path.write_text("0\t1\t-2\n")
        with pytest.raises(BundleFormatError, match="positive"):
            load_interactions(path)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(DataError):
            load_interactions(tmp_path / "i.tsv", fmt="parquet")

    def test_embedding_header_mismatch(self, tmp_path):
        E = EmbeddingMatrix(2, 1, np.arange(6, dtype=float).reshape(3, 2))
        header = save_embeddings(E, tmp_path)
        doc = json.loads(header.read_text())
        doc["dim"] = 3
        del doc["sha256"]
        header.write_text(json.dumps(doc))
        with pytest.raises(DimensionError):
            load_embeddings(header)

    def test_reco_bundle(self, tmp_path):
        train = Interactions.from_pairs([0, 1], [0, 1], [1.0, 3.0])
        test = Interactions.from_pairs([1], [0])
        E = EmbeddingMatrix(2, 2, np.random.default_rng(0).standard_normal((4, 3)))
        save_reco_bundle(train, test, E, tmp_path / "r")
        bundle = load_reco_bundle(tmp_path / "r")
        np.testing.assert_array_equal(bundle.train.weights, [1.0, 3.0])
        np.testing.assert_array_equal(bundle.embeddings.values, E.values)
        assert (bundle.num_users, bundle.num_items) == (2, 2)

    def test_reco_bundle_checksum(self, tmp_path):
        E = EmbeddingMatrix(1, 1, np.ones((2, 2)))
        save_reco_bundle(Interactions.from_pairs([0], [0]), Interactions.from_pairs([], []), E, tmp_path / "r")
        (tmp_path / "r" / "train.tsv").write_text("0\t0\t5\n")
        with pytest.raises(ChecksumError):
            load_reco_bundle(tmp_path / "r")


class TestCheckpointsAndReports:
    def test_checkpoint_file(self, tmp_path):
        params = init_edge_params(3, dim=2, seed=6)
        save_edge_checkpoint(params, tmp_path / "c.json", {"bundle": "abc"})
        doc = json.loads((tmp_path / "c.json").read_text())
        assert doc["provenance"] == {"bundle": "abc"}
        np.testing.assert_array_equal(load_edge_checkpoint(tmp_path / "c.json").projection, params.projection)

    def test_checkpoint_not_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{not json")
        with pytest.raises(BundleFormatError):
            load_edge_checkpoint(tmp_path / "c.json")

    def test_report_to_stdout(self, capsys):
        write_report({"b": 1, "a": [1.5]})
        out = capsys.readouterr().out
        assert json.loads(out) == {"a": [1.5], "b": 1, "schema_version": 1}
        assert out.index('"a"') < out.index('"b"')
        assert out.endswith("}\n")

    def test_report_to_file(self, tmp_path):
        text = write_report({"x": 2}, tmp_path / "r.json")
        assert (tmp_path / "r.json").read_text() == text

    def test_report_rejects_nan(self):
        with pytest.raises(ValueError):
            write_report({"x": float("nan")}, "-")
