"""Expert-aware stratification: pick statically resident experts from traces.

Pipeline: cluster input embeddings into strata, select representative
prototypes proportionally per cluster, probe only those prototypes to
approximate the global expert activation map, then keep the most frequently
activated experts per layer resident.  A synthetic trace generator provides a
desk-scale stand-in for real routing traces; the trace file format accepts
real embeddings/activations too.

Hit ratios are activation-event weighted by token counts throughout: residency
pays off per token routed, not per distinct expert.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TRACE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RoutingTrace:
    """Per-sample input embeddings and per-layer expert activations.

    Activations are stored flat: parallel arrays of (sample, layer, expert,
    token_count) rows, which keeps probing and hit-ratio computation vectorized
    even for ragged per-sample activation sets.
    """

    embeddings: np.ndarray  # (num_samples, embedding_dim) float64
    sample_idx: np.ndarray  # (num_events,) int64
    layer_idx: np.ndarray  # (num_events,) int64
    expert_idx: np.ndarray  # (num_events,) int64
    token_counts: np.ndarray  # (num_events,) int64
    num_layers: int
    experts_per_layer: int

    def __post_init__(self) -> None:
        if self.embeddings.ndim != 2:
            raise ValueError("embeddings must be a (num_samples, dim) array")
        n_events = len(self.sample_idx)
        if not (len(self.layer_idx) == len(self.expert_idx) == len(self.token_counts) == n_events):
            raise ValueError("activation arrays must have equal length")
        if n_events:
            if self.expert_idx.min() < 0 or self.expert_idx.max() >= self.experts_per_layer:
                raise ValueError("expert indices out of range")
            if self.layer_idx.min() < 0 or self.layer_idx.max() >= self.num_layers:
                raise ValueError("layer indices out of range")
            if self.token_counts.min() < 1:
                raise ValueError("token counts must be >= 1")

    @property
    def num_samples(self) -> int:
        return self.embeddings.shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.embeddings.shape[1]


@dataclass(frozen=True)
class ActivationMap:
    """Per-layer activation counts per expert, normalizable to frequencies."""

    counts: np.ndarray  # (num_layers, experts_per_layer) float64

    def __post_init__(self) -> None:
        if self.counts.ndim != 2:
            raise ValueError("counts must be a (num_layers, experts_per_layer) array")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def num_layers(self) -> int:
        return self.counts.shape[0]

    @property
    def experts_per_layer(self) -> int:
        return self.counts.shape[1]

    def layer_shares(self, layer: int) -> np.ndarray:
        total = self.counts[layer].sum()
        if total <= 0:
            raise ValueError(f"layer {layer} has no recorded activations")
        return self.counts[layer] / total

    def sorted_share_profile(self) -> np.ndarray:
        """Representative per-layer skew: mean over layers of the descending
        normalized share vector, renormalized to sum 1.

        Collapsing the layers this way lets a homogeneous per-layer cost model
        consume a heterogeneous map: what matters there is how concentrated
        routing is on the hottest/coldest experts, not which indices they are.
        """
        totals = self.counts.sum(axis=1, keepdims=True)
        if np.any(totals <= 0):
            raise ValueError("every layer must have recorded activations")
        shares = np.sort(self.counts / totals, axis=1)[:, ::-1]
        profile = shares.mean(axis=0)
        return profile / profile.sum()

    @classmethod
    def uniform(cls, num_layers: int, experts_per_layer: int) -> "ActivationMap":
        return cls(np.ones((num_layers, experts_per_layer)))

    def to_lists(self) -> list[list[float]]:
        return self.counts.tolist()


@dataclass(frozen=True)
class StratificationConfig:
    num_clusters: int
    sample_ratio: float
    seed: int = 0
    max_kmeans_iters: int = 100
    tolerance: float = 1e-6

    def __post_init__(self) -> None:
        if self.num_clusters < 1:
            raise ValueError("num_clusters must be >= 1")
        if not (0.0 < self.sample_ratio <= 1.0):
            raise ValueError("sample_ratio must be in (0, 1]")
        if self.max_kmeans_iters < 1:
            raise ValueError("max_kmeans_iters must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass(frozen=True)
class ResidencyPlan:
    """Resident expert indices per layer, at most capacity_per_layer each."""

    resident: tuple[tuple[int, ...], ...]
    capacity_per_layer: int

    def __post_init__(self) -> None:
        if self.capacity_per_layer < 0:
            raise ValueError("capacity_per_layer must be >= 0")
        for layer_set in self.resident:
            if len(layer_set) > self.capacity_per_layer:
                raise ValueError("a layer exceeds capacity_per_layer")
            if len(set(layer_set)) != len(layer_set):
                raise ValueError("resident experts must be distinct per layer")

    @property
    def num_layers(self) -> int:
        return len(self.resident)

    def to_lists(self) -> list[list[int]]:
        return [list(layer) for layer in self.resident]


# ---------------------------------------------------------------------------
# Synthetic traces


def generate_synthetic_trace(
    num_samples: int,
    embedding_dim: int,
    num_layers: int,
    experts_per_layer: int,
    top_k: int,
    num_latent_topics: int,
    zipf_exponent: float,
    seed: int,
    tokens_per_activation: int = 4,
) -> RoutingTrace:
    """Draw a topic-structured trace with skewed expert routing.

    Each sample belongs to one of ``num_latent_topics`` Gaussian embedding
    clusters; topic sizes themselves follow a mild rank skew so strata differ
    in weight.  Per (topic, layer) a random expert permutation carries a
    Zipf(zipf_exponent) preference, and each sample activates ``top_k``
    distinct experts from it.  Token counts start at 1 per activated expert,
    with ``(tokens_per_activation - 1) * top_k`` extra tokens spread
    multinomially along the renormalized preferences.  Deterministic given
    ``seed``.
    """
    if min(num_samples, embedding_dim, num_layers, experts_per_layer, top_k, num_latent_topics) < 1:
        raise ValueError("all counts must be >= 1")
    if top_k > experts_per_layer:
        raise ValueError("top_k cannot exceed experts_per_layer")
    if zipf_exponent <= 0:
        raise ValueError("zipf_exponent must be > 0")
    if tokens_per_activation < 1:
        raise ValueError("tokens_per_activation must be >= 1")

    rng = np.random.default_rng(seed)
    E, K, T = experts_per_layer, top_k, num_latent_topics

    topic_weights = 1.0 / np.arange(1, T + 1, dtype=float)
    topic_weights /= topic_weights.sum()
    centers = rng.normal(0.0, 8.0, size=(T, embedding_dim))
    topics = rng.choice(T, size=num_samples, p=topic_weights)
    embeddings = centers[topics] + rng.standard_normal((num_samples, embedding_dim))

    rank_weights = 1.0 / np.arange(1, E + 1, dtype=float) ** zipf_exponent
    rank_weights /= rank_weights.sum()
    # expert preference per (topic, layer): a permuted Zipf profile
    prefs = np.empty((T, num_layers, E))
    for t in range(T):
        for layer in range(num_layers):
            prefs[t, layer, rng.permutation(E)] = rank_weights

    extra_tokens = (tokens_per_activation - 1) * K
    expert_idx = np.empty((num_samples, num_layers, K), dtype=np.int64)
    token_counts = np.ones((num_samples, num_layers, K), dtype=np.int64)
    for i in range(num_samples):
        topic_prefs = prefs[topics[i]]
        for layer in range(num_layers):
            p = topic_prefs[layer]
            chosen = rng.choice(E, size=K, replace=False, p=p)
            expert_idx[i, layer] = chosen
            if extra_tokens:
                w = p[chosen]
                token_counts[i, layer] += rng.multinomial(extra_tokens, w / w.sum())

    n_events = num_samples * num_layers * K
    sample_idx = np.repeat(np.arange(num_samples, dtype=np.int64), num_layers * K)
    layer_idx = np.tile(np.repeat(np.arange(num_layers, dtype=np.int64), K), num_samples)
    return RoutingTrace(
        embeddings=embeddings,
        sample_idx=sample_idx,
        layer_idx=layer_idx,
        expert_idx=expert_idx.reshape(n_events),
        token_counts=token_counts.reshape(n_events),
        num_layers=num_layers,
        experts_per_layer=E,
    )


# ---------------------------------------------------------------------------
# Clustering


@dataclass(frozen=True)
class Clustering:
    assignments: np.ndarray  # (num_samples,) int64
    centroids: np.ndarray  # (num_clusters, dim) float64
    embeddings: np.ndarray  # the clustered points, kept for prototype ranking
    iteration_inertia: tuple[float, ...]  # total distortion after each assignment

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def inertia(self) -> float:
        return self.iteration_inertia[-1]


def _nearest(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Assignment and squared distance to the nearest centroid (ties: lower id)."""
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    return assign, d2[np.arange(len(points)), assign]


def _farthest_point_seeds(x: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    first = int(rng.integers(len(x)))
    chosen = [first]
    min_d2 = ((x - x[first]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        nxt = int(min_d2.argmax())
        chosen.append(nxt)
        min_d2 = np.minimum(min_d2, ((x - x[nxt]) ** 2).sum(axis=1))
    return x[chosen].copy()


def cluster(trace: RoutingTrace, config: StratificationConfig) -> Clustering:
    """Lloyd iteration with greedy farthest-point seeding.

    Deterministic given ``config.seed``; empty clusters are reseeded to the
    point farthest from its assigned centroid, which never increases total
    distortion.
    """
    x = trace.embeddings
    k = config.num_clusters
    if k > len(x):
        raise ValueError("num_clusters cannot exceed the number of samples")

    centroids = _farthest_point_seeds(x, k, config.seed)
    inertia_log: list[float] = []
    assign = np.zeros(len(x), dtype=np.int64)
    for _ in range(config.max_kmeans_iters):
        assign, d2 = _nearest(x, centroids)
        for c in range(k):
            if not np.any(assign == c):
                outlier = int(d2.argmax())
                centroids = centroids.copy()
                centroids[c] = x[outlier]
                assign[outlier] = c
                d2 = d2.copy()
                d2[outlier] = 0.0
        inertia_log.append(float(d2.sum()))
        new_centroids = centroids.copy()
        for c in range(k):
            members = assign == c
            if np.any(members):  # degenerate duplicate-point data can leave gaps
                new_centroids[c] = x[members].mean(axis=0)
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < config.tolerance:
            break
    assign, d2 = _nearest(x, centroids)
    inertia_log.append(float(d2.sum()))
    return Clustering(
        assignments=assign,
        centroids=centroids,
        embeddings=x,
        iteration_inertia=tuple(inertia_log),
    )


def select_prototypes(clustering: Clustering, sample_ratio: float, seed: int = 0) -> list[int]:
    """Proportional prototype selection: per cluster of size n_k, the
    round(sample_ratio * n_k) members nearest the centroid (at least one per
    non-empty cluster).  Deterministic; ``seed`` is accepted for interface
    symmetry with the random baselines but the nearest-to-centroid policy does
    not consume randomness.
    """
    if not (0.0 < sample_ratio <= 1.0):
        raise ValueError("sample_ratio must be in (0, 1]")
    del seed
    chosen: list[int] = []
    for c in range(clustering.num_clusters):
        members = np.flatnonzero(clustering.assignments == c)
        if len(members) == 0:
            continue
        quota = max(1, int(sample_ratio * len(members) + 0.5))
        d2 = ((clustering.embeddings[members] - clustering.centroids[c]) ** 2).sum(axis=1)
        order = np.lexsort((members, d2))  # distance, then index, for determinism
        chosen.extend(int(i) for i in members[order[:quota]])
    return sorted(chosen)


# ---------------------------------------------------------------------------
# Probing, residency, hit ratios


def probe(trace: RoutingTrace, prototypes: list[int] | np.ndarray) -> ActivationMap:
    """Sum per-expert token counts over the prototype samples only."""
    prototypes = np.asarray(prototypes, dtype=np.int64)
    if len(prototypes) == 0:
        raise ValueError("prototypes must be non-empty")
    if prototypes.min() < 0 or prototypes.max() >= trace.num_samples:
        raise ValueError("prototype index out of range")
    keep = np.isin(trace.sample_idx, prototypes)
    counts = np.zeros((trace.num_layers, trace.experts_per_layer))
    np.add.at(counts, (trace.layer_idx[keep], trace.expert_idx[keep]), trace.token_counts[keep])
    return ActivationMap(counts)


def exact_map(trace: RoutingTrace) -> ActivationMap:
    """The full-trace activation map (probe with every sample)."""
    return probe(trace, np.arange(trace.num_samples))


def select_resident_experts(activation_map: ActivationMap, capacity_per_layer: int) -> ResidencyPlan:
    """Per layer, keep the ``capacity_per_layer`` highest-count experts
    (ties broken toward the lower expert index)."""
    if capacity_per_layer < 0:
        raise ValueError("capacity_per_layer must be >= 0")
    cap = min(capacity_per_layer, activation_map.experts_per_layer)
    layers = []
    for layer in range(activation_map.num_layers):
        order = np.argsort(-activation_map.counts[layer], kind="stable")
        layers.append(tuple(sorted(int(e) for e in order[:cap])))
    return ResidencyPlan(resident=tuple(layers), capacity_per_layer=capacity_per_layer)


def hit_ratio(trace: RoutingTrace, plan: ResidencyPlan) -> float:
    """Token-weighted fraction of activation events landing on a resident expert."""
    if plan.num_layers != trace.num_layers:
        raise ValueError("plan and trace disagree on the number of layers")
    total = trace.token_counts.sum()
    if total == 0:
        raise ValueError("trace has no activation events")
    mask = np.zeros((trace.num_layers, trace.experts_per_layer), dtype=bool)
    for layer, experts in enumerate(plan.resident):
        mask[layer, list(experts)] = True
    hits = trace.token_counts[mask[trace.layer_idx, trace.expert_idx]].sum()
    return float(hits / total)


def random_baseline(
    experts_per_layer: int, capacity: int, num_layers: int, seed: int
) -> ResidencyPlan:
    """Uniform random resident set per layer, deterministic given ``seed``.

    Implemented as a prefix of a per-layer random permutation, so plans drawn
    with the same seed are nested across capacities.
    """
    if not (0 <= capacity <= experts_per_layer):
        raise ValueError("capacity must be in 0..experts_per_layer")
    rng = np.random.default_rng(seed)
    layers = tuple(
        tuple(sorted(int(e) for e in rng.permutation(experts_per_layer)[:capacity]))
        for _ in range(num_layers)
    )
    return ResidencyPlan(resident=layers, capacity_per_layer=capacity)


def stratified_activation_map(trace: RoutingTrace, config: StratificationConfig) -> ActivationMap:
    """The full pipeline: cluster, select prototypes, probe."""
    clustering = cluster(trace, config)
    prototypes = select_prototypes(clustering, config.sample_ratio, config.seed)
    return probe(trace, prototypes)


# ---------------------------------------------------------------------------
# Trace files: line-delimited JSON, one sample per line after a header record.


def save_trace(trace: RoutingTrace, path: str | Path) -> None:
    path = Path(path)
    per_sample_layers: list[list[list[list[int]]]] = [
        [[] for _ in range(trace.num_layers)] for _ in range(trace.num_samples)
    ]
    for s, layer, e, c in zip(trace.sample_idx, trace.layer_idx, trace.expert_idx, trace.token_counts):
        per_sample_layers[s][layer].append([int(e), int(c)])
    with path.open("w") as fh:
        header = {
            "version": TRACE_SCHEMA_VERSION,
            "kind": "routing-trace",
            "num_samples": trace.num_samples,
            "embedding_dim": trace.embedding_dim,
            "num_layers": trace.num_layers,
            "experts_per_layer": trace.experts_per_layer,
        }
        fh.write(json.dumps(header) + "\n")
        for i in range(trace.num_samples):
            record = {
                "embedding": [round(v, 9) for v in trace.embeddings[i].tolist()],
                "layers": per_sample_layers[i],
            }
            fh.write(json.dumps(record) + "\n")


def load_trace(path: str | Path) -> RoutingTrace:
    path = Path(path)
    with path.open() as fh:
        header = json.loads(fh.readline())
        if header.get("kind") != "routing-trace":
            raise ValueError(f"{path}: not a routing-trace file")
        if header.get("version") != TRACE_SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported trace version {header.get('version')!r}")
        num_layers = header["num_layers"]
        experts_per_layer = header["experts_per_layer"]
        embeddings = []
        sample_idx: list[int] = []
        layer_idx: list[int] = []
        expert_idx: list[int] = []
        token_counts: list[int] = []
        for i, line in enumerate(fh):
            record = json.loads(line)
            embeddings.append(record["embedding"])
            for layer, events in enumerate(record["layers"]):
                for expert, count in events:
                    sample_idx.append(i)
                    layer_idx.append(layer)
                    expert_idx.append(expert)
                    token_counts.append(count)
    return RoutingTrace(
        embeddings=np.asarray(embeddings, dtype=float),
        sample_idx=np.asarray(sample_idx, dtype=np.int64),
        layer_idx=np.asarray(layer_idx, dtype=np.int64),
        expert_idx=np.asarray(expert_idx, dtype=np.int64),
        token_counts=np.asarray(token_counts, dtype=np.int64),
        num_layers=num_layers,
        experts_per_layer=experts_per_layer,
    )
