"""Frame deduplication by SSIM-driven hierarchical agglomerative clustering.

Clusters are compared through their medoids. Whenever the most similar pair
of clusters reaches the threshold, the first cluster's medoid is kept as a
sample and the second is dropped as its duplicate; otherwise the pair is
merged and re-queued. The last cluster standing contributes its medoid too.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from renderwait.errors import InvalidArgument
from renderwait.imaging import Frame, SsimParams, ssim_matrix

DEFAULT_EPSILON = 0.9


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]
    medoid: int

    def __post_init__(self) -> None:
        if not self.members:
            raise InvalidArgument("cluster must have at least one member")
        if len(set(self.members)) != len(self.members):
            raise InvalidArgument("cluster members must be unique")
        if self.medoid not in self.members:
            raise InvalidArgument("medoid must be a member")


@dataclass
class HacResult:
    selected: list[int]
    # (cluster a, cluster b, similarity, emitted) for every loop iteration
    rounds: list[tuple[Cluster, Cluster, float, bool]] = field(default_factory=list)

    def discarded(self, n: int) -> list[int]:
        keep = set(self.selected)
        return [i for i in range(n) if i not in keep]


def medoid(members: tuple[int, ...] | list[int], similarity: np.ndarray) -> int:
    """Member with the highest mean similarity to the cluster (first one on ties)."""
    idx = np.asarray(members, dtype=np.intp)
    block = similarity[np.ix_(idx, idx)]
    return int(idx[int(np.argmax(block.mean(axis=1)))])


def make_cluster(members: tuple[int, ...], similarity: np.ndarray) -> Cluster:
    return Cluster(members, medoid(members, similarity))


def cluster_similarity(a: Cluster, b: Cluster, similarity: np.ndarray) -> float:
    return float(similarity[a.medoid, b.medoid])


def _check(frames: list[Frame], epsilon: float) -> None:
    if not frames:
        raise InvalidArgument("hac_sample needs at least one frame")
    if not (0.0 < epsilon <= 1.0):
        raise InvalidArgument(f"epsilon must lie in (0, 1], got {epsilon}")
    shape = frames[0].pixels.shape
    if any(f.pixels.shape != shape for f in frames):
        raise InvalidArgument("all frames must share the same dimensions")


def hac_select(
    frames: list[Frame],
    epsilon: float = DEFAULT_EPSILON,
    params: SsimParams | None = None,
    similarity: np.ndarray | None = None,
) -> HacResult:
    _check(frames, epsilon)
    if similarity is None:
        similarity = ssim_matrix(frames, params)
    clusters = [Cluster((i,), i) for i in range(len(frames))]
    result = HacResult(selected=[])
    while len(clusters) > 1:
        med = np.array([c.medoid for c in clusters], dtype=np.intp)
        table = similarity[np.ix_(med, med)].copy()
        table[np.tril_indices(len(clusters))] = -np.inf
        i, j = np.unravel_index(int(np.argmax(table)), table.shape)
        a, b = clusters[i], clusters[j]
        score = float(table[i, j])
        del clusters[j], clusters[i]
        emitted = score >= epsilon
        if emitted:
            result.selected.append(a.medoid)
        else:
            clusters.append(make_cluster(a.members + b.members, similarity))
        result.rounds.append((a, b, score, emitted))
    if clusters:
        result.selected.append(clusters[0].medoid)
    return result


def hac_sample(
    frames: list[Frame],
    epsilon: float = DEFAULT_EPSILON,
    params: SsimParams | None = None,
) -> list[Frame]:
    return [frames[i] for i in hac_select(frames, epsilon, params).selected]
