"""Round-by-round online training and the serializable engine state.

The engine enforces the online contract: a round consumes only its own chunk
plus the accumulated statistics, frozen category codes, and stored database
codes; raw features from earlier rounds are never read again. Training is
functional: train_round returns a new state and never mutates its input, so
a failing round leaves the previous state untouched.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .category_codes import HighLevelState, generate_instance_codes, learn_new_category_codes
from .data import (
    CategoryRegistry,
    CodeMatrix,
    LabelMatrix,
    read_fmat,
    read_imat,
    read_lmat,
    validate_chunk,
    write_fmat,
    write_imat,
    write_lmat,
)
from .fusion import QueryBatch, compute_weights, encode_queries, solve_auxiliary, uniform_weights
from .hash_functions import HashFunctionState, solve_projection, update_statistics
from .kernel import KernelMap, apply_kernel_map, fit_anchors
from .semantics import SemanticMatrix, embed_categories, provider_from_spec

FORMAT_VERSION = 1


class ChunkValidationError(ValueError):
    """A chunk failed validation; the round was not applied."""

    def __init__(self, report):
        super().__init__("chunk validation failed: " + "; ".join(report.violations))
        self.report = report


class StateFormatError(ValueError):
    """A persisted state directory is unreadable, corrupt, or unsupported."""


@dataclass(frozen=True)
class EngineConfig:
    """All training hyperparameters; fully determines a run given the data."""

    bits: int = 32
    theta: float = 1.0
    delta: float = 1.0
    ridge: float = 1e-6
    iterations: int = 5
    anchor_count: int = 500
    kernelized_modalities: tuple = (1,)
    supervision: str = "pseudo:0"
    seed: int = 0
    fine_grained: bool = True
    weight_floor: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "kernelized_modalities", tuple(int(m) for m in self.kernelized_modalities)
        )
        if not 8 <= self.bits <= 1024:
            raise ValueError("bits must be in 8..1024")
        if not (self.theta > 0 and self.delta > 0):
            raise ValueError("theta and delta must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.anchor_count < 1:
            raise ValueError("anchor_count must be >= 1")
        if self.weight_floor < 0:
            raise ValueError("weight_floor must be non-negative")
        if any(m < 1 for m in self.kernelized_modalities):
            raise ValueError("modality ids start at 1")

    def to_dict(self):
        d = asdict(self)
        d["kernelized_modalities"] = list(self.kernelized_modalities)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "kernelized_modalities": tuple(d["kernelized_modalities"])})


@dataclass(frozen=True, eq=False)
class EngineState:
    """Complete model state after some number of absorbed rounds."""

    config: EngineConfig
    kernel_maps: tuple
    high_level: HighLevelState
    hash_fn: HashFunctionState | None
    database_codes: CodeMatrix
    database_labels: LabelMatrix
    round: int = 0
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        object.__setattr__(self, "kernel_maps", tuple(self.kernel_maps))
        if self.database_codes.count != self.database_labels.count:
            raise ValueError("database code and label column counts differ")

    @property
    def registry(self):
        return self.high_level.registry

    @property
    def database_size(self):
        return self.database_codes.count


def _provider(config):
    return provider_from_spec(config.supervision)


def _derived_seed(*parts):
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint32)[0])


def initial_state(config):
    """Fresh round-0 state; modality dimensions are fixed by the first chunk."""
    provider = _provider(config)
    return EngineState(
        config=config,
        kernel_maps=(),
        high_level=HighLevelState.empty(config.bits, provider.dim, config.ridge),
        hash_fn=None,
        database_codes=CodeMatrix(np.zeros((config.bits, 0), dtype=np.int8)),
        database_labels=LabelMatrix(np.zeros((0, 0), dtype=np.uint8)),
        round=0,
    )


def _transform_modalities(kernel_maps, modalities):
    by_source = {km.source_modality: km for km in kernel_maps}
    out = []
    for fm in modalities:
        km = by_source.get(fm.modality_id)
        out.append(apply_kernel_map(km, fm) if km is not None else fm)
    return out


def train_round(state, chunk):
    """Absorb one chunk and return the post-round state.

    Steps: fit the kernel map on round 1, lift configured modalities, learn
    codes for any new categories, generate the chunk's instance codes, fold
    the chunk into the per-modality statistics, re-solve projections and
    auxiliaries, and append codes plus labels to the database.
    """
    config = state.config
    round_ = state.round + 1
    if chunk.round != round_:
        raise ValueError(f"expected chunk for round {round_}, got round {chunk.round}")
    report = validate_chunk(chunk, state.registry)
    if not report.ok:
        raise ChunkValidationError(report)

    kernel_maps = state.kernel_maps
    if round_ == 1 and config.kernelized_modalities:
        present = {fm.modality_id for fm in chunk.modalities}
        missing = [m for m in config.kernelized_modalities if m not in present]
        if missing:
            raise ValueError(f"kernelized modalities {missing} not present in chunk")
        kernel_maps = tuple(
            fit_anchors(
                fm,
                config.anchor_count,
                sigma=None,
                seed=_derived_seed(config.seed, 101, fm.modality_id),
            )
            for fm in chunk.modalities
            if fm.modality_id in config.kernelized_modalities
        )
    lifted = _transform_modalities(kernel_maps, chunk.modalities)

    high_level = state.high_level
    new_names = [n for n in chunk.category_names if n not in state.registry]
    if new_names:
        provider = _provider(config)
        new_semantics = embed_categories(provider, new_names, first_index=len(state.registry))
        high_level = learn_new_category_codes(
            high_level,
            new_names,
            new_semantics,
            iterations=config.iterations,
            seed=_derived_seed(config.seed, 202, round_),
            round_=round_,
        )

    chunk_row_of = {name: i for i, name in enumerate(chunk.category_names)}
    perm = [chunk_row_of[name] for name in high_level.registry.names]
    labels_ordered = LabelMatrix(chunk.labels.values[perm, :])
    codes = generate_instance_codes(high_level, labels_ordered)

    hash_fn = state.hash_fn
    if hash_fn is None:
        hash_fn = HashFunctionState.empty(
            config.bits, [fm.dim for fm in lifted], config.theta, config.delta
        )
    if len(lifted) != hash_fn.modality_count:
        raise ValueError(
            f"chunk has {len(lifted)} modalities, engine was trained with "
            f"{hash_fn.modality_count}"
        )
    stats, projections, auxiliaries = [], [], []
    for fm, st in zip(lifted, hash_fn.stats):
        new_st = update_statistics(st, fm, codes)
        w_m = solve_projection(new_st, config.theta)
        stats.append(new_st)
        projections.append(w_m)
        auxiliaries.append(solve_auxiliary(new_st, w_m, config.delta))
    hash_fn = HashFunctionState(projections, auxiliaries, stats, config.theta, config.delta)

    c_now = len(high_level.registry)
    old_labels = state.database_labels.values
    padded = np.pad(old_labels, ((0, c_now - old_labels.shape[0]), (0, 0)))
    database_labels = LabelMatrix(np.concatenate([padded, labels_ordered.values], axis=1))
    database_codes = CodeMatrix(
        np.concatenate([state.database_codes.values, codes.values], axis=1)
    )
    return replace(
        state,
        kernel_maps=kernel_maps,
        high_level=high_level,
        hash_fn=hash_fn,
        database_codes=database_codes,
        database_labels=database_labels,
        round=round_,
    )


def encode_query_batch(state, query_modalities, fine_grained=None):
    """Encode raw out-of-sample queries into fused binary codes.

    Kernelized modalities are lifted with the frozen round-1 map. With a
    single modality, or with fine-grained weighting disabled, uniform
    weights are used.
    """
    if state.round < 1 or state.hash_fn is None:
        raise ValueError("engine has not absorbed any training round yet")
    lifted = _transform_modalities(state.kernel_maps, query_modalities)
    batch = QueryBatch(lifted)
    use_fg = state.config.fine_grained if fine_grained is None else fine_grained
    if use_fg and batch.modality_count >= 2:
        weights = compute_weights(
            state.hash_fn.auxiliaries, batch, state.config.weight_floor
        )
    else:
        weights = uniform_weights(batch.modality_count, batch.count)
    return encode_queries(state.hash_fn.projections, weights, batch)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_state(state, directory):
    """Persist the state as a versioned directory with checksummed blobs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blobs = {}

    def put(name, writer, values):
        writer(directory / name, values)
        blobs[name] = {
            "file": name,
            "bytes": (directory / name).stat().st_size,
            "sha256": _sha256(directory / name),
        }

    hl = state.high_level
    put("high_level_codes.imat", write_imat, hl.codes.values)
    put("semantics.fmat", write_fmat, hl.semantics.values)
    put("w_c.fmat", write_fmat, hl.w_c)
    put("database_codes.imat", write_imat, state.database_codes.values)
    put("database_labels.lmat", write_lmat, state.database_labels.values)
    modality_meta = []
    if state.hash_fn is not None:
        for i, (w, u, st) in enumerate(
            zip(state.hash_fn.projections, state.hash_fn.auxiliaries, state.hash_fn.stats),
            start=1,
        ):
            put(f"projection_{i}.fmat", write_fmat, w)
            put(f"auxiliary_{i}.fmat", write_fmat, u)
            put(f"stats_d1_{i}.fmat", write_fmat, st.d1)
            put(f"stats_d2_{i}.fmat", write_fmat, st.d2)
            put(f"stats_d3_{i}.fmat", write_fmat, st.d3)
            modality_meta.append({"rounds_absorbed": st.rounds_absorbed})
    kernel_meta = []
    for km in state.kernel_maps:
        name = f"kernel_anchors_{km.source_modality}.fmat"
        put(name, write_fmat, km.anchors)
        kernel_meta.append(
            {
                "source_modality": km.source_modality,
                "sigma": km.sigma,
                "seed": km.seed,
                "blob": name,
            }
        )
    manifest = {
        "format_version": state.format_version,
        "round": state.round,
        "config": state.config.to_dict(),
        "registry": {
            "names": list(hl.registry.names),
            "first_seen_round": list(hl.registry.first_seen_rounds),
        },
        "semantics_provider": hl.semantics.provider_id,
        "modalities": modality_meta,
        "kernel_maps": kernel_meta,
        "blobs": blobs,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _checked_blob(directory, manifest, name):
    entry = manifest["blobs"].get(name)
    if entry is None:
        raise StateFormatError(f"manifest lacks blob {name!r}")
    path = directory / entry["file"]
    if not path.is_file():
        raise StateFormatError(f"missing blob file {entry['file']!r}")
    data = path.read_bytes()
    if len(data) != entry["bytes"]:
        raise StateFormatError(
            f"blob {name!r} length {len(data)} does not match manifest {entry['bytes']}"
        )
    if hashlib.sha256(data).hexdigest() != entry["sha256"]:
        raise StateFormatError(f"blob {name!r} checksum mismatch")
    return path


def load_state(directory):
    """Load a state directory, verifying version, checksums, and invariants."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise StateFormatError(f"no manifest.json in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise StateFormatError(
            f"unsupported state format version {version!r}, expected {FORMAT_VERSION}"
        )
    config = EngineConfig.from_dict(manifest["config"])
    registry = CategoryRegistry(
        manifest["registry"]["names"], manifest["registry"]["first_seen_round"]
    )

    def blob(name, reader):
        return reader(_checked_blob(directory, manifest, name))

    codes = CodeMatrix(blob("high_level_codes.imat", read_imat))
    semantics = SemanticMatrix(
        blob("semantics.fmat", read_fmat), provider_id=manifest["semantics_provider"]
    )
    w_c = blob("w_c.fmat", read_fmat)
    high_level = HighLevelState(codes, semantics, w_c, registry, config.ridge)

    hash_fn = None
    if manifest["modalities"]:
        projections, auxiliaries, stats = [], [], []
        from .hash_functions import ModalityStatistics

        for i, meta in enumerate(manifest["modalities"], start=1):
            projections.append(blob(f"projection_{i}.fmat", read_fmat))
            auxiliaries.append(blob(f"auxiliary_{i}.fmat", read_fmat))
            d1 = blob(f"stats_d1_{i}.fmat", read_fmat)
            d2 = blob(f"stats_d2_{i}.fmat", read_fmat)
            d3 = blob(f"stats_d3_{i}.fmat", read_fmat)
            if not np.array_equal(d3, d1.T):
                raise StateFormatError(f"modality {i}: d3 is not the transpose of d1")
            stats.append(ModalityStatistics(d1, d2, d3, meta["rounds_absorbed"]))
        hash_fn = HashFunctionState(
            projections, auxiliaries, stats, config.theta, config.delta
        )

    kernel_maps = tuple(
        KernelMap(
            anchors=blob(meta["blob"], read_fmat),
            sigma=meta["sigma"],
            source_modality=meta["source_modality"],
            seed=meta["seed"],
        )
        for meta in manifest["kernel_maps"]
    )
    database_codes = CodeMatrix(blob("database_codes.imat", read_imat))
    database_labels = LabelMatrix(blob("database_labels.lmat", read_lmat))
    if database_labels.category_count != len(registry):
        raise StateFormatError("database label rows do not match registry size")
    state = EngineState(
        config=config,
        kernel_maps=kernel_maps,
        high_level=high_level,
        hash_fn=hash_fn,
        database_codes=database_codes,
        database_labels=database_labels,
        round=manifest["round"],
        format_version=version,
    )
    return state
