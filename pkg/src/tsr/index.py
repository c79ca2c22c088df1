"""Build configuration and the persisted retrieval index."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .cluster import ClusterModel
from .errors import IncompatibleIndex
from .forest import ForestEnsemble
from .globalfeat import FeatureScaling
from .shapeio import dumps_json

# cluster counts used for the public benchmarks, keyed by gallery size
PRESETS = {"mpeg7": 112, "kimia99": 15, "tari1000": 75}
_BY_SIZE = {1400: 112, 99: 15, 1000: 75}


def default_M(N: int) -> int:
    """Preset cluster count for a known benchmark size, else N / 12.5.

    The fallback keeps the shapes-per-cluster ratio of the 1400-shape preset.
    """
    if N in _BY_SIZE:
        return _BY_SIZE[N]
    return int(max(1, min(N, round(N / 12.5))))


@dataclass
class BuildConfig:
    M: int | None = None
    R: int = 256
    margin: float = 0.9
    sigma: float = 2.0
    prune_frac: float = 0.05
    turn_angle_deg: float = 45.0
    turn_arm: int = 10
    n_points: int = 100
    n_dist_bins: int = 8
    n_angle_bins: int = 12
    tau: float = 0.3
    n_shifts: int = 8
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 1
    K: int | None = None
    epsilon: float = 7.0
    prob_floor: float = 1e-6
    kernel_k: int = 7
    knn_w: int = 10
    iters: int = 20
    kmeans_restarts: int = 50
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BuildConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def resolved(self, N: int) -> "BuildConfig":
        """Copy with M and K filled in for a gallery of N shapes."""
        from .relevance import default_k

        M = self.M if self.M is not None else default_M(N)
        K = self.K if self.K is not None else default_k(N, M)
        return BuildConfig.from_dict({**self.to_dict(), "M": M, "K": K})

    # parameters a query must share with the index it is run against
    def descriptor_key(self) -> tuple:
        return (self.R, self.margin, self.sigma, self.n_points, self.n_dist_bins,
                self.n_angle_bins)


@dataclass
class RetrievalIndex:
    config: BuildConfig
    ids: list
    labels: list
    raw_features: np.ndarray  # (N, 13) unscaled
    scaling: FeatureScaling
    descriptors: np.ndarray | None  # (N, n, bins) or None for array-assembled indexes
    dist: np.ndarray  # (N, N)
    clusters: ClusterModel
    forest: ForestEnsemble
    prf: np.ndarray  # (N, M) relevance table
    failures: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def N(self) -> int:
        return len(self.ids)

    @property
    def M(self) -> int:
        return self.clusters.M

    @property
    def features(self) -> np.ndarray:
        return self.scaling.apply(self.raw_features)

    def position(self, shape_id: str) -> int | None:
        if "pos" not in self._cache:
            self._cache["pos"] = {s: i for i, s in enumerate(self.ids)}
        return self._cache["pos"].get(shape_id)

    def to_sections(self) -> dict:
        meta = {"config": self.config.to_dict(), "ids": list(self.ids),
                "labels": list(self.labels), "failures": [list(f) for f in self.failures]}
        out = {"meta": dumps_json(meta),
               "raw_features": self.raw_features, "scale_lo": self.scaling.lo,
               "scale_hi": self.scaling.hi, "dist": self.dist,
               "assignment": self.clusters.assignment, "medoids": self.clusters.medoids,
               "training_idx": self.clusters.training_idx,
               "training_labels": self.clusters.training_labels, "prf": self.prf}
        if self.descriptors is not None:
            out["descriptors"] = self.descriptors
        for k, v in self.forest.to_arrays().items():
            out[f"forest.{k}"] = v
        return out

    @classmethod
    def from_sections(cls, s: dict) -> "RetrievalIndex":
        try:
            meta = json.loads(s["meta"].decode())
            config = BuildConfig.from_dict(meta["config"])
            M = int(config.M)
            clusters = ClusterModel(M, s["assignment"], s["medoids"], s["training_idx"],
                                    s["training_labels"])
            forest = ForestEnsemble.from_arrays(
                {k.split(".", 1)[1]: v for k, v in s.items() if k.startswith("forest.")})
            N = len(meta["ids"])
            shapes = {"raw_features": (N, forest.n_features), "dist": (N, N),
                      "assignment": (N,), "medoids": (M,), "prf": (N, M)}
            for name, want in shapes.items():
                if s[name].shape != want:
                    raise ValueError(f"section {name!r} has shape {s[name].shape}, expected {want}")
            desc = s.get("descriptors")
            if desc is not None and len(desc) != N:
                raise ValueError(f"{len(desc)} descriptors for {N} shapes")
            return cls(config=config, ids=meta["ids"], labels=meta["labels"],
                       raw_features=s["raw_features"],
                       scaling=FeatureScaling(s["scale_lo"], s["scale_hi"]),
                       descriptors=desc, dist=s["dist"], clusters=clusters,
                       forest=forest, prf=s["prf"],
                       failures=[tuple(f) for f in meta.get("failures", [])])
        except (KeyError, ValueError) as e:
            raise IncompatibleIndex(f"index is missing or has malformed sections: {e}") from e

    def __eq__(self, other):
        if not isinstance(other, RetrievalIndex):
            return False
        a, b = self.to_sections(), other.to_sections()
        if a.keys() != b.keys():
            return False
        return all(a[k] == b[k] if isinstance(a[k], bytes) else np.array_equal(a[k], b[k])
                   for k in a)
