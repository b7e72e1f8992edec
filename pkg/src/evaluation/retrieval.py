"""
Gallery/probe retrieval evaluation and the frame-shuffle ablation
"""

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.autograd.tensor import Tensor
from src.data.sampler import shuffle_frames, split_gallery_probe, to_clip
from src.data.silhouette import GaitDataset, SilhouetteSequence
from src.models.recognizer import GaitRecognizer
from src.utils.exceptions import EvaluationError
from src.utils.logger import get_logger, log_execution_time

logger = get_logger(__name__)

RANKS = (1, 5, 10)


@dataclass
class PartEmbedding:
    """Per-part embedding of one sequence, the unit of retrieval"""
    vectors: np.ndarray
    subject_id: str
    view_label: str
    condition_label: str

    @property
    def key(self) -> str:
        return f"{self.subject_id}/{self.condition_label}/{self.view_label}"

    @classmethod
    def of(cls, seq: SilhouetteSequence, vectors: np.ndarray) -> "PartEmbedding":
        return cls(vectors, seq.subject_id, seq.view_label, seq.condition_label)


@dataclass
class EvalReport:
    """
    Attributes:
        rank_k: Rank-k accuracy per k
        mean_ap: Mean average precision
        per_query_ranks: 1-based rank of the first correct gallery entry per evaluated probe
        num_probes: Evaluated probes
        excluded_probes: Keys of probes without a valid same-subject gallery entry
        exclude_identical_view: Whether same-view gallery entries were ignored
    """
    rank_k: Dict[int, float]
    mean_ap: float
    per_query_ranks: List[int] = field(default_factory=list)
    num_probes: int = 0
    excluded_probes: List[str] = field(default_factory=list)
    exclude_identical_view: bool = False

    @property
    def rank_1(self) -> float:
        return self.rank_k[1]

    def to_dict(self) -> Dict:
        return {
            **{f"rank_{k}": v for k, v in self.rank_k.items()},
            'mAP': self.mean_ap,
            'num_probes': self.num_probes,
            'excluded_probes': len(self.excluded_probes),
            'exclude_identical_view': self.exclude_identical_view,
        }


@dataclass
class ShuffleAblation:
    accuracy: float
    shuffled_accuracy: float
    delta: float
    intact: EvalReport
    shuffled: EvalReport


@log_execution_time(logger)
def extract_embeddings(
    model: GaitRecognizer,
    sequences: Sequence[SilhouetteSequence],
    batch_size: int = 8
) -> List[PartEmbedding]:
    """
    Eval-mode embeddings of whole sequences

    Sequences of equal length are batched together; results come back in
    input order.

    Raises:
        EvaluationError: For a sequence without frames
    """
    groups: Dict[int, List[int]] = OrderedDict()
    for index, seq in enumerate(sequences):
        if len(seq) < 1:
            raise EvaluationError(f"Sequence {seq.key} has no frames")
        groups.setdefault(len(seq), []).append(index)

    vectors: Dict[int, np.ndarray] = {}
    for indices in groups.values():
        for start in range(0, len(indices), batch_size):
            chunk = indices[start:start + batch_size]
            clips = np.stack([to_clip(sequences[i].frames) for i in chunk])
            for i, embedding in zip(chunk, model.embed(Tensor(clips))):
                vectors[i] = embedding
    return [PartEmbedding.of(seq, vectors[i]) for i, seq in enumerate(sequences)]


def distance_matrix(probe: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """
    Summed per-part Euclidean distances

    Args:
        probe: [Q, P, D]
        gallery: [G, P, D]

    Returns:
        [Q, G]
    """
    probe = probe.astype(np.float64)
    gallery = gallery.astype(np.float64)
    total = np.zeros((probe.shape[0], gallery.shape[0]))
    for part in range(probe.shape[1]):
        q, g = probe[:, part], gallery[:, part]
        d2 = (q * q).sum(1)[:, None] + (g * g).sum(1)[None, :] - 2.0 * q @ g.T
        total += np.sqrt(np.maximum(d2, 0.0))
    return total


def average_precision(matches: np.ndarray) -> float:
    """Average precision of a ranked boolean relevance list"""
    hits = np.flatnonzero(matches)
    if len(hits) == 0:
        return 0.0
    return float(np.mean(np.arange(1, len(hits) + 1) / (hits + 1)))


def evaluate(
    gallery: Sequence[PartEmbedding],
    probe: Sequence[PartEmbedding],
    exclude_identical_view: bool = False,
    exclude_self: bool = True,
    ranks: Tuple[int, ...] = RANKS
) -> EvalReport:
    """
    Rank-k accuracy and mAP of probes retrieved against a gallery

    Gallery entries sharing the probe's key are ignored when
    ``exclude_self`` is set, and entries sharing its view when
    ``exclude_identical_view`` is set. Probes left without any valid
    same-subject entry are excluded and listed in the report.

    Raises:
        EvaluationError: On an empty gallery or when every probe is excluded
    """
    if not gallery:
        raise EvaluationError("Gallery is empty")
    if not probe:
        raise EvaluationError("Probe set is empty")
    distances = distance_matrix(np.stack([e.vectors for e in probe]), np.stack([e.vectors for e in gallery]))
    g_subjects = np.array([e.subject_id for e in gallery])
    g_views = np.array([e.view_label for e in gallery])
    g_keys = np.array([e.key for e in gallery])

    first_ranks: List[int] = []
    precisions: List[float] = []
    excluded: List[str] = []
    for row, query in zip(distances, probe):
        valid = np.ones(len(gallery), dtype=bool)
        if exclude_self:
            valid &= g_keys != query.key
        if exclude_identical_view:
            valid &= g_views != query.view_label
        matches = valid & (g_subjects == query.subject_id)
        if not matches.any():
            excluded.append(query.key)
            continue
        candidates = np.flatnonzero(valid)
        order = candidates[np.argsort(row[candidates], kind='stable')]
        ranked = matches[order]
        first_ranks.append(int(np.argmax(ranked)) + 1)
        precisions.append(average_precision(ranked))

    if excluded:
        logger.warning(f"{len(excluded)} probes have no valid gallery entry of their subject and were excluded")
    if not first_ranks:
        raise EvaluationError("No probe has a valid gallery entry of its subject")
    ranks_array = np.asarray(first_ranks)
    report = EvalReport(
        rank_k={k: float(np.mean(ranks_array <= k)) for k in ranks},
        mean_ap=float(np.mean(precisions)),
        per_query_ranks=first_ranks,
        num_probes=len(first_ranks),
        excluded_probes=excluded,
        exclude_identical_view=exclude_identical_view,
    )
    ranks_text = " ".join(f"R{k}={v:.4f}" for k, v in report.rank_k.items())
    logger.info(f"Evaluated {report.num_probes} probes: {ranks_text} mAP={report.mean_ap:.4f}")
    return report


@log_execution_time(logger)
def shuffled_eval(
    model: GaitRecognizer,
    dataset: GaitDataset,
    rng: np.random.Generator,
    gallery_per_subject: int = 1,
    gallery_conditions: Optional[Sequence[str]] = None,
    exclude_identical_view: bool = False
) -> ShuffleAblation:
    """
    Rank-1 with intact probes versus per-sequence shuffled probes

    The gallery stays intact; ``delta`` is accuracy minus shuffled accuracy.
    """
    gallery_set, probe_set = split_gallery_probe(dataset, gallery_per_subject, gallery_conditions)
    gallery = extract_embeddings(model, gallery_set.sequences)
    intact = evaluate(gallery, extract_embeddings(model, probe_set.sequences), exclude_identical_view)
    shuffled_probes = [shuffle_frames(seq, rng) if len(seq) > 1 else seq for seq in probe_set]
    shuffled = evaluate(gallery, extract_embeddings(model, shuffled_probes), exclude_identical_view)
    delta = intact.rank_1 - shuffled.rank_1
    logger.info(f"Shuffle ablation: rank-1 {intact.rank_1:.4f} -> {shuffled.rank_1:.4f} (delta {delta:.4f})")
    return ShuffleAblation(intact.rank_1, shuffled.rank_1, delta, intact, shuffled)
