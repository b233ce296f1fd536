"""Grasp-trajectory tracking by association.

A small transformer encoder/decoder associates grasp candidates across a
window of frames with queries built from past tracked poses. The association
score is the scaled dot product of decoder and encoder outputs; training uses
a cross-entropy loss that treats every candidate within a translation
tolerance of the tracked pose (in the object frame) as a positive.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, Tensor, embedding, parameter, zeros_parameter
from .scene import (
    Box,
    DEFAULT_WORKSPACE,
    FrameObservation,
    TimeSlice,
    cross_frame_object_distance,
    nearest_in_object_frame,
)
from .se3 import Grasp, Pose, object_frame_distance

DESCRIPTOR_DIM = 13
KNN_K = 4
MAX_FRAME_SLOTS = 8


class NonFiniteActivation(Exception):
    pass


class Lost:
    """Sentinel returned by infer_track when no candidate is trusted."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Lost"


LOST = Lost()


@dataclass
class TrackerConfig:
    feature_dim: int = 32
    frames: int = 3
    candidates: int = 48
    encoder_layers: int = 2
    decoder_layers: int = 2
    heads: int = 4
    dropout_prob: float = 0.1
    tolerance: float = 0.01  # meters
    min_score: float = 0.1
    max_annotation_ids: int = 64
    workspace: Box = field(default_factory=lambda: DEFAULT_WORKSPACE)

    def __post_init__(self):
        if self.feature_dim % self.heads != 0:
            raise ValueError("feature_dim must be divisible by heads")
        if self.frames < 1 or self.tolerance <= 0:
            raise ValueError("frames >= 1 and tolerance > 0 required")

    @property
    def min_probability(self) -> float:
        # rejects near-uniform associations
        return 2.0 / self.candidates


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    epochs: int = 20
    batch_size: int = 4
    lr_power: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1:
            raise ValueError("learning_rate > 0 and epochs >= 1 required")


# ---------------------------------------------------------------------------
# Weights


def init_weights(cfg: TrackerConfig, seed: int = 0) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    c = cfg.feature_dim
    w: dict[str, Tensor] = {
        "feat.proj.w": parameter(rng, DESCRIPTOR_DIM, c),
        "feat.proj.b": zeros_parameter(c),
        "feat.id_emb": Tensor(rng.normal(0.0, 1.0, size=(cfg.max_annotation_ids + 1, c)), requires_grad=True),
        "feat.frame_emb": Tensor(rng.normal(0.0, 0.1, size=(MAX_FRAME_SLOTS, c)), requires_grad=True),
    }

    def attn(prefix: str):
        w[f"{prefix}.wq"] = parameter(rng, c, c)
        w[f"{prefix}.wk"] = parameter(rng, c, c)
        w[f"{prefix}.wv"] = parameter(rng, c, c)
        w[f"{prefix}.wo"] = zeros_parameter(c, c)  # stable small-scale start
        w[f"{prefix}.bq"] = zeros_parameter(c)
        w[f"{prefix}.bk"] = zeros_parameter(c)
        w[f"{prefix}.bv"] = zeros_parameter(c)
        w[f"{prefix}.bo"] = zeros_parameter(c)

    def block(prefix: str, n_attn: int):
        names = ["self", "cross"][:n_attn]
        for name in names:
            attn(f"{prefix}.{name}")
        for i in range(n_attn + 1):
            w[f"{prefix}.ln{i}.g"] = Tensor(np.ones(c), requires_grad=True)
            w[f"{prefix}.ln{i}.b"] = zeros_parameter(c)
        w[f"{prefix}.ff.w1"] = parameter(rng, c, 4 * c)
        w[f"{prefix}.ff.b1"] = zeros_parameter(4 * c)
        w[f"{prefix}.ff.w2"] = parameter(rng, 4 * c, c)
        w[f"{prefix}.ff.b2"] = zeros_parameter(c)

    for i in range(cfg.encoder_layers):
        block(f"enc{i}", 1)
    for i in range(cfg.decoder_layers):
        block(f"dec{i}", 2)
    return w


WEIGHTS_MAGIC = b"GTRK1"


def save_weights(path, weights: dict[str, Tensor]):
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", len(weights)))
        for name in sorted(weights):
            data = weights[name].data.astype("<f4")
            nb = name.encode()
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_weights(path) -> dict[str, Tensor]:
    with open(path, "rb") as fh:
        if fh.read(5) != WEIGHTS_MAGIC:
            raise ValueError("not a tracker weights file")
        (count,) = struct.unpack("<I", fh.read(4))
        out: dict[str, Tensor] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode()
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            n = int(np.prod(shape)) if rank else 1
            data = np.frombuffer(fh.read(4 * n), dtype="<f4").reshape(shape)
            out[name] = Tensor(data.astype(np.float64), requires_grad=True)
    return out


# ---------------------------------------------------------------------------
# Features


def build_descriptors(obs: FrameObservation) -> np.ndarray:
    """Raw per-candidate descriptor, shape (M, 13): translation, 6D rotation
    (first two matrix columns), width, score, mean/min distance to the k=4
    nearest co-frame candidates."""
    m = len(obs.candidates)
    ts = np.stack([c.pose.translation for c in obs.candidates])
    desc = np.zeros((m, DESCRIPTOR_DIM))
    desc[:, 0:3] = ts
    for i, c in enumerate(obs.candidates):
        desc[i, 3:6] = c.pose.rotation[:, 0]
        desc[i, 6:9] = c.pose.rotation[:, 1]
        desc[i, 9] = c.width
        desc[i, 10] = c.score
    dists = np.linalg.norm(ts[:, None, :] - ts[None, :, :], axis=-1)
    np.fill_diagonal(dists, np.inf)
    k = min(KNN_K, m - 1)
    if k > 0:
        nearest = np.sort(dists, axis=1)[:, :k]
        desc[:, 11] = nearest.mean(axis=1)
        desc[:, 12] = nearest.min(axis=1)
    return desc


@dataclass
class FeatureBundle:
    """Stacked per-frame descriptors plus the query positions into f*."""

    descriptors: np.ndarray  # (T, M, 13)
    annotation_ids: np.ndarray  # (T, M)
    frame_slots: np.ndarray  # (T,) embedding slot per frame
    query_positions: np.ndarray  # (T_q,) absolute row indices into the flat N axis

    @property
    def n_frames(self) -> int:
        return self.descriptors.shape[0]

    @property
    def m(self) -> int:
        return self.descriptors.shape[1]


@dataclass
class ForwardCache:
    encoder_out: Tensor  # (B, N, C)
    decoder_out: Tensor  # (B, T_q, C)
    scores: Tensor  # (B, T_q, N)


@dataclass
class AssociationScores:
    scores: np.ndarray  # (T_q, N)
    probabilities: np.ndarray  # (T_q, T, M), softmax per frame block


def bundle_from_frames(
    frames: list[FrameObservation],
    query_frames: list[int],
    query_candidates: list[int],
    frame_slot_offset: int = 0,
) -> FeatureBundle:
    desc = np.stack([build_descriptors(fr) for fr in frames])
    ids = np.stack([fr.annotation_ids for fr in frames])
    m = desc.shape[1]
    qpos = np.array([f * m + c for f, c in zip(query_frames, query_candidates)], dtype=int)
    slots = np.arange(len(frames)) + frame_slot_offset
    return FeatureBundle(desc, ids, slots, qpos)


def bundle_from_slice(sl: TimeSlice) -> FeatureBundle:
    label_idx = [g.candidate_index for g in sl.labels]
    return bundle_from_frames(sl.frames, list(range(len(sl.frames))), label_idx)


def build_features(
    bundle: FeatureBundle, cfg: TrackerConfig, weights: dict[str, Tensor]
) -> Tensor:
    """Project descriptors to C dims and add annotation-id and frame-index
    embeddings; returns the flat (1, N, C) feature tensor f*."""
    t, m, _ = bundle.descriptors.shape
    desc = Tensor(bundle.descriptors.reshape(1, t * m, DESCRIPTOR_DIM))
    x = desc @ weights["feat.proj.w"] + weights["feat.proj.b"]
    ids = bundle.annotation_ids.reshape(1, t * m).copy()
    ids[ids < 0] = cfg.max_annotation_ids
    ids[ids >= cfg.max_annotation_ids] = cfg.max_annotation_ids
    x = x + embedding(weights["feat.id_emb"], ids)
    slot_ids = np.repeat(bundle.frame_slots % MAX_FRAME_SLOTS, m).reshape(1, t * m)
    x = x + embedding(weights["feat.frame_emb"], slot_ids)
    return x


# ---------------------------------------------------------------------------
# Transformer forward


def _layer_norm(x: Tensor, g: Tensor, b: Tensor) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc * (var + 1e-5).pow(-0.5) * g + b


def _mha(
    xq: Tensor,
    xkv: Tensor,
    weights: dict[str, Tensor],
    prefix: str,
    heads: int,
    dropout_prob: float,
    rng: np.random.Generator | None,
) -> Tensor:
    bsz, tq, c = xq.shape
    tk = xkv.shape[-2]
    dh = c // heads

    def split(x: Tensor, tlen: int) -> Tensor:
        return x.reshape(bsz, tlen, heads, dh).transpose(0, 2, 1, 3)

    q = split(xq @ weights[f"{prefix}.wq"] + weights[f"{prefix}.bq"], tq)
    k = split(xkv @ weights[f"{prefix}.wk"] + weights[f"{prefix}.bk"], tk)
    v = split(xkv @ weights[f"{prefix}.wv"] + weights[f"{prefix}.bv"], tk)
    att = (q @ k.swap_last()) * (1.0 / math.sqrt(dh))
    att = att.softmax()
    out = (att @ v).transpose(0, 2, 1, 3).reshape(bsz, tq, c)
    out = out @ weights[f"{prefix}.wo"] + weights[f"{prefix}.bo"]
    return out.dropout(dropout_prob, rng)


def _ff(x: Tensor, weights: dict[str, Tensor], prefix: str) -> Tensor:
    h = (x @ weights[f"{prefix}.ff.w1"] + weights[f"{prefix}.ff.b1"]).gelu()
    return h @ weights[f"{prefix}.ff.w2"] + weights[f"{prefix}.ff.b2"]


def associate(
    features: Tensor,
    query_positions: np.ndarray,
    cfg: TrackerConfig,
    weights: dict[str, Tensor],
    rng: np.random.Generator | None = None,
) -> ForwardCache:
    """Encoder self-attention over f*, decoder cross-attention of the queries,
    then S = D E^T / sqrt(C). Dropout is active only when rng is given."""
    p = cfg.dropout_prob
    x = features
    for i in range(cfg.encoder_layers):
        x = _layer_norm(x + _mha(x, x, weights, f"enc{i}.self", cfg.heads, p, rng),
                        weights[f"enc{i}.ln0.g"], weights[f"enc{i}.ln0.b"])
        x = _layer_norm(x + _ff(x, weights, f"enc{i}"),
                        weights[f"enc{i}.ln1.g"], weights[f"enc{i}.ln1.b"])
    enc = x

    qpos = np.asarray(query_positions)
    if qpos.ndim == 1:
        qpos = np.broadcast_to(qpos, (features.shape[0], len(qpos)))
    q = features.gather_rows(qpos)
    for i in range(cfg.decoder_layers):
        q = _layer_norm(q + _mha(q, q, weights, f"dec{i}.self", cfg.heads, p, rng),
                        weights[f"dec{i}.ln0.g"], weights[f"dec{i}.ln0.b"])
        q = _layer_norm(q + _mha(q, enc, weights, f"dec{i}.cross", cfg.heads, p, rng),
                        weights[f"dec{i}.ln1.g"], weights[f"dec{i}.ln1.b"])
        q = _layer_norm(q + _ff(q, weights, f"dec{i}"),
                        weights[f"dec{i}.ln2.g"], weights[f"dec{i}.ln2.b"])
    scores = (q @ enc.swap_last()) * (1.0 / math.sqrt(cfg.feature_dim))
    if not np.isfinite(scores.data).all():
        raise NonFiniteActivation("non-finite association scores in forward pass")
    return ForwardCache(enc, q, scores)


def forward_bundle(
    bundle: FeatureBundle,
    cfg: TrackerConfig,
    weights: dict[str, Tensor],
    rng: np.random.Generator | None = None,
) -> ForwardCache:
    feats = build_features(bundle, cfg, weights)
    return associate(feats, bundle.query_positions, cfg, weights, rng)


def association_probabilities(cache: ForwardCache, n_frames: int) -> AssociationScores:
    """Per query and frame, softmax over the frame's M-candidate score block."""
    s = cache.scores.data
    if s.ndim == 3:
        s = s[0]
    tq, n = s.shape
    m = n // n_frames
    blocks = s.reshape(tq, n_frames, m)
    z = blocks - blocks.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return AssociationScores(s, p)


# ---------------------------------------------------------------------------
# Tolerance loss


def tolerance_mask(sl: TimeSlice, tolerance: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame mask of tolerance positives, shape (T, M), and counts (T,).

    A frame with no candidate inside the tolerance falls back to the plain
    label as its single positive, keeping the loss finite and supervised.
    """
    t = len(sl.frames)
    m = len(sl.frames[0].candidates)
    mask = np.zeros((t, m))
    for j, (fr, label) in enumerate(zip(sl.frames, sl.labels)):
        for i, c in enumerate(fr.candidates):
            if object_frame_distance(c, label, fr.true_object_pose) < tolerance:
                mask[j, i] = 1.0
        if mask[j].sum() == 0:
            mask[j, label.candidate_index] = 1.0
    return mask, mask.sum(axis=1)


def tolerance_loss_from_scores(scores: Tensor, mask: np.ndarray, counts: np.ndarray) -> Tensor:
    """-sum_t sum_j (1/n_j) sum_{tolerance i} log P(i | Q_t), batched.

    scores: (B, T_q, N); mask: (B, T, M) or (T, M); counts matching.
    """
    if mask.ndim == 2:
        mask = mask[None]
        counts = counts[None]
    bsz, tq, n = scores.shape
    t, m = mask.shape[-2:]
    logp = scores.reshape(bsz, tq, t, m).log_softmax()
    w = Tensor((mask / counts[..., None])[:, None, :, :])
    return -(w * logp).sum()


def tolerance_loss(
    cache: ForwardCache, sl: TimeSlice, tolerance: float
) -> float:
    mask, counts = tolerance_mask(sl, tolerance)
    return float(tolerance_loss_from_scores(cache.scores, mask, counts).data)


# ---------------------------------------------------------------------------
# Training


@dataclass
class SlicePack:
    """Precomputed constant arrays for one training slice."""

    bundle: FeatureBundle
    mask: np.ndarray
    counts: np.ndarray


def pack_slice(sl: TimeSlice, cfg: TrackerConfig) -> SlicePack:
    mask, counts = tolerance_mask(sl, cfg.tolerance)
    return SlicePack(bundle_from_slice(sl), mask, counts)


def _batched_features(
    packs: list[SlicePack], cfg: TrackerConfig, weights: dict[str, Tensor]
) -> Tensor:
    t, m, _ = packs[0].bundle.descriptors.shape
    desc = np.stack([p.bundle.descriptors.reshape(t * m, DESCRIPTOR_DIM) for p in packs])
    ids = np.stack([p.bundle.annotation_ids.reshape(t * m) for p in packs]).copy()
    ids[ids < 0] = cfg.max_annotation_ids
    ids[ids >= cfg.max_annotation_ids] = cfg.max_annotation_ids
    x = Tensor(desc) @ weights["feat.proj.w"] + weights["feat.proj.b"]
    x = x + embedding(weights["feat.id_emb"], ids)
    slots = np.broadcast_to(
        np.repeat(packs[0].bundle.frame_slots % MAX_FRAME_SLOTS, m), (len(packs), t * m)
    )
    x = x + embedding(weights["feat.frame_emb"], slots)
    return x


def batch_loss(
    packs: list[SlicePack],
    cfg: TrackerConfig,
    weights: dict[str, Tensor],
    rng: np.random.Generator | None = None,
) -> Tensor:
    feats = _batched_features(packs, cfg, weights)
    qpos = np.stack([p.bundle.query_positions for p in packs])
    cache = associate(feats, qpos, cfg, weights, rng)
    mask = np.stack([p.mask for p in packs])
    counts = np.stack([p.counts for p in packs])
    return tolerance_loss_from_scores(cache.scores, mask, counts) * (1.0 / len(packs))


def gradient_step(
    packs: list[SlicePack],
    cfg: TrackerConfig,
    weights: dict[str, Tensor],
    optimizer: Adam,
    rng: np.random.Generator | None = None,
) -> float:
    if not packs:
        raise ValueError("empty batch")
    optimizer.zero_grad()
    loss = batch_loss(packs, cfg, weights, rng)
    loss.backward()
    for name, p in weights.items():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise NonFiniteActivation(f"non-finite gradient in {name}")
    optimizer.step()
    return float(loss.data)


def train(
    slices: list[TimeSlice],
    cfg: TrackerConfig,
    train_cfg: TrainConfig,
    weights: dict[str, Tensor] | None = None,
    log_every: int = 0,
) -> dict[str, Tensor]:
    if weights is None:
        weights = init_weights(cfg, seed=train_cfg.seed)
    packs = [pack_slice(sl, cfg) for sl in slices]
    steps_per_epoch = math.ceil(len(packs) / train_cfg.batch_size)
    optimizer = Adam(
        weights,
        lr=train_cfg.learning_rate,
        weight_decay=train_cfg.weight_decay,
        total_steps=train_cfg.epochs * steps_per_epoch,
        power=train_cfg.lr_power,
    )
    rng = np.random.default_rng([train_cfg.seed, 0xBEEF])
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(packs))
        total = 0.0
        for s in range(steps_per_epoch):
            batch = [packs[i] for i in order[s * train_cfg.batch_size : (s + 1) * train_cfg.batch_size]]
            total += gradient_step(batch, cfg, weights, optimizer, rng)
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{train_cfg.epochs} mean loss {total / steps_per_epoch:.4f}")
    return weights


# ---------------------------------------------------------------------------
# Inference and non-learned baselines


def _passes_filter(c: Grasp, cfg: TrackerConfig) -> bool:
    return cfg.workspace.contains(c.pose.translation) and c.score >= cfg.min_score


def infer_track(
    history: list[tuple[FrameObservation, Grasp]],
    current: FrameObservation,
    cfg: TrackerConfig,
    weights: dict[str, Tensor],
) -> Grasp | Lost:
    """Select the current-frame candidate with maximum query-averaged
    association probability; Lost when nothing survives filtering or the best
    averaged probability is below the uniform-rejection floor."""
    allowed = [i for i, c in enumerate(current.candidates) if _passes_filter(c, cfg)]
    if not allowed:
        return LOST
    if not history:
        best = max(allowed, key=lambda i: (current.candidates[i].score, -i))
        return current.candidates[best]

    frames = [obs for obs, _ in history] + [current]
    qframes = list(range(len(history)))
    qcands = [sel.candidate_index for _, sel in history]
    bundle = bundle_from_frames(frames, qframes, qcands)
    cache = forward_bundle(bundle, cfg, weights, rng=None)
    assoc = association_probabilities(cache, len(frames))
    avg = assoc.probabilities[:, len(frames) - 1, :].mean(axis=0)
    best = max(allowed, key=lambda i: (avg[i], -i))
    if avg[best] < cfg.min_probability:
        return LOST
    return current.candidates[best]


def baseline_nearest_last(current: FrameObservation, last: Grasp) -> Grasp:
    """Candidate nearest to the last tracked pose in world-frame translation."""
    if not current.candidates:
        raise ValueError("empty candidate set")
    return min(
        current.candidates,
        key=lambda c: (
            round(float(np.linalg.norm(c.pose.translation - last.pose.translation)), 12),
            c.candidate_index,
        ),
    )


def oracle_track(
    current: FrameObservation,
    anchor: Grasp,
    anchor_object_pose: Pose,
    true_object_pose: Pose,
) -> Grasp:
    """Simulation upper bound: nearest candidate to the anchor in the object
    frame, using the hidden true object pose; same tie rules as labeling."""
    return nearest_in_object_frame(current.candidates, true_object_pose, anchor, anchor_object_pose)


# ---------------------------------------------------------------------------
# Evaluation


def track_slice_learned(
    sl: TimeSlice, cfg: TrackerConfig, weights: dict[str, Tensor]
) -> list[Grasp | Lost]:
    """Sequential tracking over a slice, conditioning on selected poses."""
    history: list[tuple[FrameObservation, Grasp]] = []
    out: list[Grasp | Lost] = []
    for fr in sl.frames:
        sel = infer_track(history[-(cfg.frames - 1):] if cfg.frames > 1 else [], fr, cfg, weights)
        out.append(sel)
        if not isinstance(sel, Lost):
            history.append((fr, sel))
    return out


def track_slice_baseline(sl: TimeSlice, cfg: TrackerConfig) -> list[Grasp | Lost]:
    last: Grasp | None = None
    out: list[Grasp | Lost] = []
    for fr in sl.frames:
        allowed = [c for c in fr.candidates if _passes_filter(c, cfg)]
        if not allowed:
            out.append(LOST)
            continue
        if last is None:
            sel = max(allowed, key=lambda c: (c.score, -c.candidate_index))
        else:
            sel = baseline_nearest_last(fr, last)
        out.append(sel)
        last = sel
    return out


def tolerance_accuracy(
    slices: list[TimeSlice],
    cfg: TrackerConfig,
    weights: dict[str, Tensor] | None,
    mode: str = "learned",
) -> float:
    """Fraction of frames j >= 1 whose selected pose lies within the tolerance
    of the labeled (oracle) pose in the object frame."""
    hits = 0
    total = 0
    for sl in slices:
        if mode == "learned":
            sels = track_slice_learned(sl, cfg, weights)
        elif mode == "baseline":
            sels = track_slice_baseline(sl, cfg)
        else:
            raise ValueError(mode)
        for fr, label, sel in list(zip(sl.frames, sl.labels, sels))[1:]:
            total += 1
            if isinstance(sel, Lost):
                continue
            if object_frame_distance(sel, label, fr.true_object_pose) < cfg.tolerance:
                hits += 1
    return hits / max(total, 1)
