"""On-disk formats for graph bundles, interactions, embeddings, checkpoints and reports.

A graph bundle is a directory::

    manifest.json   format_version, counts, flags, file names, sha256 checksums
    graph.tsv       u<TAB>v per line (u <= v only when the graph is symmetric)
    features.csv    one row per node, values written with %.17g
    features.bin    used instead of the CSV above 10^6 values
    labels.tsv      node<TAB>class for every labeled node
    splits.json     {"train": [...], "val": [...], "test": [...]}

Every writer produces byte-identical output for identical inputs.
"""

import csv
import hashlib
import json
import logging
import struct
import sys
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from .edge_model import EdgeClassifierParams
from .errors import BundleFormatError, ChecksumError, DataError, DimensionError
from .graph import LabelVector, build_graph
from .node_clf import Dataset, Split
from .reco import EmbeddingMatrix, Interactions

log = logging.getLogger("BundleIO")

FORMAT_VERSION = 1
RECO_FORMAT = "negcn-reco-bundle"
REPORT_SCHEMA_VERSION = 1
MANIFEST = "manifest.json"
BINARY_THRESHOLD = 10**6
MATRIX_MAGIC = b"NEGCNMX1"

PathLike = Union[str, Path]


class RecoBundle(NamedTuple):
    train: Interactions
    test: Interactions
    embeddings: EmbeddingMatrix
    num_users: int
    num_items: int


def file_sha256(path: PathLike) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 20), b""):
                digest.update(chunk)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from e
    return digest.hexdigest()


def dumps_json(doc) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise DataError(f"cannot write {path}: {e.strerror}") from e


def _read_json(path: Path):
    if not path.exists():
        raise DataError(f"missing file: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except UnicodeDecodeError as e:
        raise BundleFormatError(path, f"not UTF-8 text (byte offset {e.start})") from e
    except json.JSONDecodeError as e:
        raise BundleFormatError(path, f"invalid JSON: {e.msg}", e.lineno) from e


def _lines(path: Path):
    """Yield ``(line_number, fields)`` for non-blank, non-``#`` lines, split on whitespace."""
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with path.open("rb") as f:
        for line_number, raw in enumerate(f, start=1):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise BundleFormatError(path, f"not UTF-8 text (byte {e.start})", line_number) from e
            fields = line.split()
            if fields and not fields[0].startswith("#"):
                yield line_number, fields


def _ints(path: Path, line_number: int, fields: List[str]) -> List[int]:
    try:
        return [int(x) for x in fields]
    except ValueError:
        raise BundleFormatError(path, f"expected integers, got {' '.join(fields)!r}", line_number)


# ---------------------------------------------------------------- matrices


def write_matrix(directory: Path, stem: str, X: np.ndarray) -> str:
    """Write ``X`` as ``<stem>.csv`` or, above the size threshold, ``<stem>.bin``; return the file name."""
    X = np.asarray(X, dtype=np.float64)
    if X.size > BINARY_THRESHOLD:
        name = f"{stem}.bin"
        header = MATRIX_MAGIC + struct.pack("<QQ", X.shape[0], X.shape[1])
        try:
            (directory / name).write_bytes(header + X.astype("<f8").tobytes(order="C"))
        except OSError as e:
            raise DataError(f"cannot write {directory / name}: {e.strerror}") from e
        return name

    name = f"{stem}.csv"
    try:
        with (directory / name).open("w", encoding="utf-8", newline="\n") as f:
            np.savetxt(f, X, fmt="%.17g", delimiter=",")
    except OSError as e:
        raise DataError(f"cannot write {directory / name}: {e.strerror}") from e
    return name


def read_matrix(path: Path) -> np.ndarray:
    if not path.exists():
        raise DataError(f"missing file: {path}")

    if path.suffix == ".bin":
        raw = path.read_bytes()
        head = len(MATRIX_MAGIC) + 16
        if len(raw) < head or raw[: len(MATRIX_MAGIC)] != MATRIX_MAGIC:
            raise BundleFormatError(path, "not a binary matrix file")
        n_rows, n_cols = struct.unpack("<QQ", raw[len(MATRIX_MAGIC) : head])
        if len(raw) - head != n_rows * n_cols * 8:
            raise BundleFormatError(path, f"expected {n_rows}x{n_cols} values, file size disagrees")
        return np.frombuffer(raw, dtype="<f8", offset=head).reshape(n_rows, n_cols).astype(np.float64)

    rows: List[List[float]] = []
    width = None
    line_number = 0
    try:
        with path.open(encoding="utf-8", newline="") as f:
            for line_number, record in enumerate(csv.reader(f), start=1):
                if not record:
                    continue
                try:
                    values = [float(x) for x in record]
                except ValueError:
                    raise BundleFormatError(path, "non-numeric value", line_number)
                if width is None:
                    width = len(values)
                elif len(values) != width:
                    raise BundleFormatError(path, f"expected {width} columns, got {len(values)}", line_number)
                rows.append(values)
    except UnicodeDecodeError as e:
        raise BundleFormatError(path, "not UTF-8 text") from e
    except csv.Error as e:
        raise BundleFormatError(path, str(e), line_number + 1) from e
    X = np.array(rows, dtype=np.float64).reshape(len(rows), width or 0)
    if not np.isfinite(X).all():
        raise BundleFormatError(path, "non-finite value in matrix")
    return X


# ------------------------------------------------------------ graph bundle


def save_bundle(dataset: Dataset, path: PathLike, extra: Optional[dict] = None) -> dict:
    """
    Write a graph bundle in canonical form and return its manifest.

    Args:
        dataset (Dataset): Graph, features, labels and split.
        path: Bundle directory, created if missing.
        extra (Optional[dict]): Generator or provenance record stored in the manifest.
    """
    g, X, y, split = dataset
    directory = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create bundle directory {directory}: {e.strerror}") from e

    rows, cols = g.arcs()
    if g.symmetric:
        keep = rows <= cols
        rows, cols = rows[keep], cols[keep]
    _write_text(directory / "graph.tsv", "".join(f"{u}\t{v}\n" for u, v in zip(rows.tolist(), cols.tolist())))

    features_name = write_matrix(directory, "features", X)

    known = np.flatnonzero(y.known_mask)
    _write_text(
        directory / "labels.tsv",
        "".join(f"{v}\t{c}\n" for v, c in zip(known.tolist(), y.labels[known].tolist())),
    )
    _write_text(directory / "splits.json", dumps_json(split.to_dict()))

    files = {
        "graph": "graph.tsv",
        "features": features_name,
        "labels": "labels.tsv",
        "splits": "splits.json",
    }
    manifest = {
        "format_version": FORMAT_VERSION,
        "num_nodes": g.num_nodes,
        "num_classes": y.num_classes,
        "num_features": int(np.asarray(X).shape[1]),
        "num_edge_lines": int(rows.shape[0]),
        "symmetric": g.symmetric,
        "self_loops": g.has_self_loops,
        "files": files,
        "checksums": {key: file_sha256(directory / name) for key, name in files.items()},
    }
    if extra:
        manifest["extra"] = extra
    _write_text(directory / MANIFEST, dumps_json(manifest))
    log.info("saved bundle %s (%d nodes, %d edge lines)", directory, g.num_nodes, rows.shape[0])
    return manifest


def read_manifest(path: PathLike) -> dict:
    directory = Path(path)
    manifest_path = directory / MANIFEST
    manifest = _read_json(manifest_path)
    if not isinstance(manifest, dict):
        raise BundleFormatError(manifest_path, "manifest must be a JSON object")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleFormatError(manifest_path, f"unsupported format_version {version!r}")
    for key in ("num_nodes", "num_classes", "files", "checksums", "symmetric"):
        if key not in manifest:
            raise BundleFormatError(manifest_path, f"missing key {key!r}")
    return manifest


def bundle_digest(path: PathLike) -> str:
    """Content hash of a bundle (the manifest pins every file by checksum)."""
    return file_sha256(Path(path) / MANIFEST)


def _verified(directory: Path, manifest: dict, key: str) -> Path:
    name = manifest["files"].get(key)
    if name is None:
        raise BundleFormatError(directory / MANIFEST, f"no file recorded for {key!r}")
    target = directory / name
    if not target.exists():
        raise DataError(f"missing file: {target}")
    expected = manifest["checksums"].get(key)
    actual = file_sha256(target)
    if expected != actual:
        raise ChecksumError(f"{target}: checksum mismatch (manifest {expected}, file {actual})")
    return target


def load_bundle(path: PathLike) -> Dataset:
    """
    Load and fully validate a graph bundle.

    Raises:
        DataError: Missing files or count mismatches between files.
        ChecksumError: A file differs from its manifest checksum.
        BundleFormatError: Malformed content, reported with the line number.
    """
    directory = Path(path)
    manifest = read_manifest(directory)
    n, num_classes = int(manifest["num_nodes"]), int(manifest["num_classes"])

    graph_path = _verified(directory, manifest, "graph")
    edges = []
    for line_number, fields in _lines(graph_path):
        if len(fields) != 2:
            raise BundleFormatError(graph_path, f"expected 2 fields, got {len(fields)}", line_number)
        u, v = _ints(graph_path, line_number, fields)
        if not (0 <= u < n and 0 <= v < n):
            raise BundleFormatError(graph_path, f"node id outside [0, {n})", line_number)
        edges.append((u, v))
    g = build_graph(
        np.array(edges, dtype=np.int64).reshape(-1, 2),
        n,
        symmetrize=bool(manifest["symmetric"]),
        add_self_loops=bool(manifest.get("self_loops", False)),
    )

    X = read_matrix(_verified(directory, manifest, "features"))
    if X.shape[0] != n:
        raise DimensionError(f"{directory}: features have {X.shape[0]} rows for {n} nodes")

    labels_path = _verified(directory, manifest, "labels")
    labels = np.full(n, -1, dtype=np.int64)
    for line_number, fields in _lines(labels_path):
        if len(fields) != 2:
            raise BundleFormatError(labels_path, f"expected 2 fields, got {len(fields)}", line_number)
        v, c = _ints(labels_path, line_number, fields)
        if not 0 <= v < n:
            raise BundleFormatError(labels_path, f"node {v} outside [0, {n})", line_number)
        if not 0 <= c < num_classes:
            raise BundleFormatError(labels_path, f"class {c} outside [0, {num_classes})", line_number)
        if labels[v] != -1:
            raise BundleFormatError(labels_path, f"node {v} labeled twice", line_number)
        labels[v] = c
    y = LabelVector(labels, num_classes, labels >= 0)

    splits_path = _verified(directory, manifest, "splits")
    doc = _read_json(splits_path)
    try:
        split = Split.from_lists(doc["train"], doc["val"], doc["test"])
    except (KeyError, TypeError, ValueError) as e:
        raise BundleFormatError(splits_path, f"expected train/val/test integer lists ({e})") from e
    split.check_range(n)
    for name, nodes in (("train", split.train), ("val", split.val), ("test", split.test)):
        if not y.known_mask[nodes].all():
            raise DataError(f"{splits_path}: {name} split contains unlabeled nodes")

    log.info("loaded bundle %s (%d nodes, %d arcs)", directory, n, g.num_arcs)
    return Dataset(g, X, y, split)


# ----------------------------------------------------- citation converter


def convert_citation_dataset(directory: PathLike, name: str, seed: int) -> Tuple[Dataset, dict]:
    """
    Convert the public ``<name>.content`` / ``<name>.cites`` distribution.

    ``.content`` lines are ``paper_id feature... class_label``; ``.cites``
    lines are ``cited_id citing_id``. Node ids follow content-file order and
    class ids the sorted class names. Citations with an unknown endpoint or
    citing themselves are skipped and counted. The split takes 20 random
    nodes per class for training, then 500 for validation and 1000 for test.

    Returns:
        Tuple[Dataset, dict]: The dataset and a conversion summary.
    """
    directory = Path(directory)
    content_path = directory / f"{name}.content"
    cites_path = directory / f"{name}.cites"

    ids: Dict[str, int] = {}
    rows: List[List[float]] = []
    class_names: List[str] = []
    width = None
    for line_number, fields in _lines(content_path):
        if len(fields) < 3:
            raise BundleFormatError(content_path, "expected id, features and class", line_number)
        paper, values, label = fields[0], fields[1:-1], fields[-1]
        if paper in ids:
            raise BundleFormatError(content_path, f"duplicate paper id {paper!r}", line_number)
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise BundleFormatError(content_path, f"expected {width} features, got {len(values)}", line_number)
        try:
            rows.append([float(x) for x in values])
        except ValueError:
            raise BundleFormatError(content_path, "non-numeric feature", line_number)
        ids[paper] = len(ids)
        class_names.append(label)
    if not ids:
        raise DataError(f"{content_path} has no papers")

    classes = sorted(set(class_names))
    class_index = {c: i for i, c in enumerate(classes)}
    labels = np.array([class_index[c] for c in class_names], dtype=np.int64)

    edges, citations, skipped, self_cites = [], 0, 0, 0
    for line_number, fields in _lines(cites_path):
        if len(fields) != 2:
            raise BundleFormatError(cites_path, f"expected 2 fields, got {len(fields)}", line_number)
        citations += 1
        cited, citing = fields
        if cited not in ids or citing not in ids:
            skipped += 1
            continue
        if cited == citing:
            self_cites += 1
            continue
        edges.append((ids[citing], ids[cited]))

    n = len(ids)
    g = build_graph(np.array(edges, dtype=np.int64).reshape(-1, 2), n, symmetrize=True)
    X = np.array(rows, dtype=np.float64)

    rng = np.random.default_rng(seed)
    train = []
    for c in range(len(classes)):
        members = np.flatnonzero(labels == c)
        if members.shape[0] < 20:
            raise DataError(f"class {classes[c]!r} has {members.shape[0]} nodes, fewer than 20")
        train.extend(rng.choice(members, size=20, replace=False).tolist())
    rest = rng.permutation(np.setdiff1d(np.arange(n), train))
    if rest.shape[0] < 1500:
        raise DataError(f"{n} nodes leave too few for 500 validation and 1000 test nodes")
    split = Split.from_lists(train, rest[:500], rest[500:1500])

    summary = {
        "name": name,
        "num_nodes": n,
        "num_classes": len(classes),
        "classes": classes,
        "num_features": int(X.shape[1]),
        "citations": citations,
        "skipped_unknown_endpoint": skipped,
        "skipped_self_citation": self_cites,
        "undirected_edges": int(g.undirected_edges().shape[0]),
    }
    log.info("converted %s: %d nodes, %d citations (%d skipped)", name, n, citations, skipped + self_cites)
    return Dataset(g, X, LabelVector.fully_known(labels, len(classes)), split), summary


# --------------------------------------------------- checkpoints / reco


def save_edge_checkpoint(params: EdgeClassifierParams, path: PathLike, provenance: Optional[dict] = None) -> None:
    _write_text(Path(path), dumps_json(params.to_dict(provenance)))


def load_edge_checkpoint(path: PathLike) -> EdgeClassifierParams:
    path = Path(path)
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise BundleFormatError(path, "checkpoint must be a JSON object")
    return EdgeClassifierParams.from_dict(doc)


def load_interactions(path: PathLike, fmt: str = "tsv") -> Interactions:
    """
    Read user-item interactions.

    Formats:
        ``tsv``: ``user item [weight]`` per line, weight defaulting to 1.
        ``adjacency``: ``user item item ...`` per line, each item with weight 1.
    """
    if fmt not in ("tsv", "adjacency"):
        raise DataError(f"unknown interaction format {fmt!r}")
    path = Path(path)
    users: List[int] = []
    items: List[int] = []
    weights: List[float] = []
    for line_number, fields in _lines(path):
        if fmt == "adjacency":
            ids = _ints(path, line_number, fields)
            users.extend([ids[0]] * (len(ids) - 1))
            items.extend(ids[1:])
            weights.extend([1.0] * (len(ids) - 1))
            continue
        if len(fields) not in (2, 3):
            raise BundleFormatError(path, f"expected 2 or 3 fields, got {len(fields)}", line_number)
        u, i = _ints(path, line_number, fields[:2])
        try:
            w = float(fields[2]) if len(fields) == 3 else 1.0
        except ValueError:
            raise BundleFormatError(path, f"weight {fields[2]!r} is not a number", line_number)
        if not (np.isfinite(w) and w > 0):
            raise BundleFormatError(path, "weight must be positive", line_number)
        if u < 0 or i < 0:
            raise BundleFormatError(path, "negative id", line_number)
        users.append(u)
        items.append(i)
        weights.append(w)
    return Interactions.from_pairs(users, items, weights)


def save_interactions(inter: Interactions, path: PathLike) -> None:
    _write_text(
        Path(path),
        "".join(
            f"{u}\t{i}\t{w:.17g}\n"
            for u, i, w in zip(inter.users.tolist(), inter.items.tolist(), inter.weights.tolist())
        ),
    )


def save_embeddings(E: EmbeddingMatrix, directory: PathLike, stem: str = "embeddings") -> Path:
    """Write the matrix next to a ``<stem>.json`` header; return the header path."""
    directory = Path(directory)
    name = write_matrix(directory, stem, E.values)
    header = {
        "num_users": E.num_users,
        "num_items": E.num_items,
        "dim": E.dim,
        "matrix": name,
        "sha256": file_sha256(directory / name),
    }
    header_path = directory / f"{stem}.json"
    _write_text(header_path, dumps_json(header))
    return header_path


def load_embeddings(header_path: PathLike) -> EmbeddingMatrix:
    header_path = Path(header_path)
    header = _read_json(header_path)
    try:
        num_users, num_items, dim = int(header["num_users"]), int(header["num_items"]), int(header["dim"])
        matrix_path = header_path.parent / header["matrix"]
    except (KeyError, TypeError, ValueError) as e:
        raise BundleFormatError(header_path, f"invalid embedding header ({e})") from e
    if "sha256" in header and file_sha256(matrix_path) != header["sha256"]:
        raise ChecksumError(f"{matrix_path}: checksum mismatch")
    values = read_matrix(matrix_path)
    if values.shape != (num_users + num_items, dim):
        raise DimensionError(
            f"{matrix_path}: shape {values.shape}, header declares ({num_users + num_items}, {dim})"
        )
    return EmbeddingMatrix(num_users, num_items, values)


def save_reco_bundle(
    train: Interactions,
    test: Interactions,
    E: EmbeddingMatrix,
    path: PathLike,
    extra: Optional[dict] = None,
) -> dict:
    directory = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create bundle directory {directory}: {e.strerror}") from e
    save_interactions(train, directory / "train.tsv")
    save_interactions(test, directory / "test.tsv")
    header = save_embeddings(E, directory)
    files = {"train": "train.tsv", "test": "test.tsv", "embeddings": header.name}
    manifest = {
        "format": RECO_FORMAT,
        "format_version": FORMAT_VERSION,
        "num_users": E.num_users,
        "num_items": E.num_items,
        "files": files,
        "checksums": {key: file_sha256(directory / name) for key, name in files.items()},
    }
    if extra:
        manifest["extra"] = extra
    _write_text(directory / MANIFEST, dumps_json(manifest))
    log.info("saved interaction bundle %s (%d train, %d test)", directory, len(train), len(test))
    return manifest


def load_reco_bundle(path: PathLike) -> RecoBundle:
    directory = Path(path)
    manifest_path = directory / MANIFEST
    manifest = _read_json(manifest_path)
    if not isinstance(manifest, dict):
        raise BundleFormatError(manifest_path, "manifest must be a JSON object")
    if manifest.get("format") != RECO_FORMAT or manifest.get("format_version") != FORMAT_VERSION:
        raise BundleFormatError(manifest_path, "not an interaction bundle of a supported version")
    train = load_interactions(_verified(directory, manifest, "train"))
    test = load_interactions(_verified(directory, manifest, "test"))
    E = load_embeddings(_verified(directory, manifest, "embeddings"))
    return RecoBundle(train, test, E, E.num_users, E.num_items)


def write_report(doc: dict, out: Optional[PathLike] = None) -> str:
    """Serialize a report canonically to ``out`` or stdout; return the text."""
    doc = dict(doc)
    doc.setdefault("schema_version", REPORT_SCHEMA_VERSION)
    text = dumps_json(doc)
    if out is None or str(out) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        _write_text(Path(out), text)
    return text
