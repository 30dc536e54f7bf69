"""Checkpoint directory format.

A checkpoint is a directory holding a JSON manifest plus binary blobs:

    manifest.json        dims, seed, scalar optimizer state, metadata
    architecture.txt     the architecture line
    assignment.tsv       relation_id <TAB> group_index
    entities.bin         matrix blob (best embeddings)
    relations.bin        matrix blob
    centroids.bin        matrix blob (group centroids)
    policy.bin           named parameter blocks (optional)
    adam.bin             named Adam moment blocks (optional)
    adagrad_*.bin        Adagrad accumulators (optional)
    state_*.bin          last-epoch embeddings for resuming (optional)

Matrix blobs are an 8-byte magic, row and column counts as little-endian
uint64, then row-major float64 little-endian data. Named block files hold
a count followed by (name, shape, data) records. Everything numeric is
stored 64-bit regardless of the in-memory dtype.
"""

import json
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import controller
from .errors import DataError
from .grouping import GroupAssignment
from .scoring import EmbeddingTable
from .search_space import Architecture
from .training import AdagradState

FORMAT_VERSION = 1
MATRIX_MAGIC = b"SFSMAT01"
BLOCKS_MAGIC = b"SFSBLK01"


def write_matrix(path, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if arr.ndim != 2:
        raise ValueError("matrix blobs must be 2-d")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", *arr.shape))
        fh.write(arr.tobytes())


def read_matrix(path):
    data = Path(path).read_bytes()
    if len(data) < 24 or data[:8] != MATRIX_MAGIC:
        raise DataError(f"{path}: not a matrix blob")
    rows, cols = struct.unpack("<QQ", data[8:24])
    expected = 24 + rows * cols * 8
    if len(data) != expected:
        raise DataError(
            f"{path}: expected {expected} bytes for {rows}x{cols}, got {len(data)}"
        )
    return np.frombuffer(data[24:], dtype="<f8").reshape(rows, cols).copy()


def write_blocks(path, blocks):
    """Write named float arrays; keys are sorted for byte-stable output."""
    with open(path, "wb") as fh:
        fh.write(BLOCKS_MAGIC)
        fh.write(struct.pack("<I", len(blocks)))
        for name in sorted(blocks):
            arr = np.ascontiguousarray(blocks[name], dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def read_blocks(path):
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:8] != BLOCKS_MAGIC:
        raise DataError(f"{path}: not a parameter block file")
    (count,) = struct.unpack("<I", data[8:12])
    pos = 12
    blocks = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", data, pos)
            pos += 8 * ndim
            n = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f8", count=n, offset=pos)
            pos += 8 * n
            blocks[name] = arr.reshape(shape).copy()
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: truncated or corrupt block file: {exc}") from None
    if pos != len(data):
        raise DataError(f"{path}: {len(data) - pos} trailing bytes")
    return blocks


@dataclass
class Checkpoint:
    manifest: dict
    table: EmbeddingTable
    arch: Architecture
    groups: GroupAssignment
    policy: controller.PolicyState | None = None
    adam: controller.AdamState | None = None
    adagrad: AdagradState | None = None
    state_table: EmbeddingTable | None = None


def save_checkpoint(
    directory,
    table,
    arch,
    groups,
    seed=0,
    dataset=None,
    metrics=None,
    policy=None,
    adam=None,
    adagrad=None,
    state_table=None,
    train_state=None,
):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "dim": int(table.dim),
        "n_blocks": int(table.n_blocks),
        "n_groups": int(groups.n_groups),
        "n_entities": int(table.n_entities),
        "n_relations": int(table.n_relations),
        "seed": int(seed),
        "architecture": arch.to_line(),
        "dataset": str(dataset) if dataset is not None else None,
        "metrics": metrics,
        "groups_sse": float(groups.sse),
        "policy": None,
        "adam": None,
        "adagrad": None,
        "train_state": train_state,
    }
    write_matrix(directory / "entities.bin", table.entities)
    write_matrix(directory / "relations.bin", table.relations)
    write_matrix(directory / "centroids.bin", groups.centroids)
    with open(directory / "architecture.txt", "w") as fh:
        fh.write(arch.to_line() + "\n")
    with open(directory / "assignment.tsv", "w") as fh:
        for r, g in enumerate(groups.groups):
            fh.write(f"{r}\t{int(g)}\n")
    if policy is not None:
        manifest["policy"] = {
            "n_steps": policy.n_steps,
            "n_ops": policy.n_ops,
            "hidden_size": policy.hidden_size,
            "embed_size": policy.embed_size,
            "baseline_decay": policy.baseline_decay,
            "baseline": policy.baseline,
        }
        write_blocks(directory / "policy.bin", policy.params)
    if adam is not None:
        manifest["adam"] = {
            "t": adam.t,
            "learning_rate": adam.learning_rate,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
        }
        blocks = {f"m.{k}": v for k, v in adam.m.items()}
        blocks.update({f"v.{k}": v for k, v in adam.v.items()})
        write_blocks(directory / "adam.bin", blocks)
    if adagrad is not None:
        manifest["adagrad"] = {
            "learning_rate": adagrad.learning_rate,
            "eps": adagrad.eps,
        }
        write_matrix(directory / "adagrad_entities.bin", adagrad.sq_entities)
        write_matrix(directory / "adagrad_relations.bin", adagrad.sq_relations)
    if state_table is not None:
        write_matrix(directory / "state_entities.bin", state_table.entities)
        write_matrix(directory / "state_relations.bin", state_table.relations)
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def _require(condition, message):
    if not condition:
        raise DataError(message)


def load_checkpoint(directory):
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"no manifest at {manifest_path}")
    with open(manifest_path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{manifest_path}: invalid JSON: {exc}") from None
    version = manifest.get("format_version")
    _require(
        version == FORMAT_VERSION,
        f"checkpoint format version {version} unsupported (want {FORMAT_VERSION})",
    )
    entities = read_matrix(directory / "entities.bin")
    relations = read_matrix(directory / "relations.bin")
    centroids = read_matrix(directory / "centroids.bin")
    _require(
        entities.shape == (manifest["n_entities"], manifest["dim"]),
        f"entity blob shape {entities.shape} does not match manifest",
    )
    _require(
        relations.shape == (manifest["n_relations"], manifest["dim"]),
        f"relation blob shape {relations.shape} does not match manifest",
    )
    table = EmbeddingTable(entities, relations, manifest["n_blocks"])
    try:
        arch = Architecture.from_line(manifest["architecture"])
    except ValueError as exc:
        raise DataError(f"bad architecture in manifest: {exc}") from None
    _require(
        arch.n_groups == manifest["n_groups"] and arch.n_blocks == manifest["n_blocks"],
        "architecture dims disagree with manifest",
    )
    assignment = np.full(manifest["n_relations"], -1, dtype=np.int64)
    with open(directory / "assignment.tsv") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            _require(
                len(parts) == 2,
                f"assignment.tsv:{lineno}: expected two tab-separated fields",
            )
            r, g = int(parts[0]), int(parts[1])
            _require(
                0 <= r < manifest["n_relations"],
                f"assignment.tsv:{lineno}: relation id {r} out of range",
            )
            _require(
                0 <= g < manifest["n_groups"],
                f"assignment.tsv:{lineno}: group index {g} out of range",
            )
            assignment[r] = g
    _require((assignment >= 0).all(), "assignment.tsv is missing relations")
    # centroid width is the clustering-space width, not necessarily dim
    # (single-group assignments carry width-1 placeholders)
    _require(
        centroids.shape[0] == manifest["n_groups"],
        f"centroid blob has {centroids.shape[0]} rows but the manifest "
        f"records {manifest['n_groups']} groups",
    )
    groups = GroupAssignment(assignment, centroids, manifest.get("groups_sse", 0.0))

    policy = None
    adam = None
    if manifest.get("policy"):
        meta = manifest["policy"]
        policy = controller.PolicyState(
            meta["n_steps"],
            meta["n_ops"],
            hidden_size=meta["hidden_size"],
            embed_size=meta["embed_size"],
            baseline_decay=meta["baseline_decay"],
        )
        policy.baseline = float(meta["baseline"])
        blocks = read_blocks(directory / "policy.bin")
        _require(
            set(blocks) == set(policy.params),
            "policy.bin blocks do not match expected parameter names",
        )
        for key, arr in blocks.items():
            _require(
                arr.shape == policy.params[key].shape,
                f"policy block {key} has shape {arr.shape}, "
                f"want {policy.params[key].shape}",
            )
            policy.params[key] = arr
        if manifest.get("adam"):
            meta = manifest["adam"]
            adam = controller.AdamState(
                policy.params,
                learning_rate=meta["learning_rate"],
                beta1=meta["beta1"],
                beta2=meta["beta2"],
                eps=meta["eps"],
            )
            adam.t = int(meta["t"])
            blocks = read_blocks(directory / "adam.bin")
            expected = {f"m.{k}" for k in policy.params}
            expected |= {f"v.{k}" for k in policy.params}
            _require(
                set(blocks) == expected,
                "adam.bin blocks do not match expected moment names",
            )
            for key in policy.params:
                adam.m[key] = blocks[f"m.{key}"]
                adam.v[key] = blocks[f"v.{key}"]

    adagrad = None
    if manifest.get("adagrad"):
        meta = manifest["adagrad"]
        adagrad = AdagradState.__new__(AdagradState)
        adagrad.learning_rate = float(meta["learning_rate"])
        adagrad.eps = float(meta["eps"])
        adagrad.sq_entities = read_matrix(directory / "adagrad_entities.bin")
        adagrad.sq_relations = read_matrix(directory / "adagrad_relations.bin")

    state_table = None
    if (directory / "state_entities.bin").is_file():
        state_table = EmbeddingTable(
            read_matrix(directory / "state_entities.bin"),
            read_matrix(directory / "state_relations.bin"),
            manifest["n_blocks"],
        )
    return Checkpoint(
        manifest=manifest,
        table=table,
        arch=arch,
        groups=groups,
        policy=policy,
        adam=adam,
        adagrad=adagrad,
        state_table=state_table,
    )
