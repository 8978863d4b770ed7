"""Graph-similarity image retrieval and ranking/precision metrics."""
from dataclasses import dataclass, field
import logging
import re
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from sdgraph.config import RECALL_AT
from sdgraph.errors import EmptyQuery, InputError, MissingGold
from sdgraph.ingest import GoldRecord, Lexicon, split_constituent
from sdgraph.models import AnnotationRecord
from sdgraph.ontology import Taxonomy
from sdgraph.semgraph import SceneDescriptionGraph, SemanticGraph, generalize

logger = logging.getLogger(__name__)

ARTICLES = frozenset({'a', 'an', 'the'})
COPULA = frozenset({'is', 'are', 'am', 'be', 'being', 'been', 'was', 'were'})

NodeSignature = Tuple[str, FrozenSet[str]]


def jaccard(a: FrozenSet[str], b: FrozenSet[str]) -> float:
    """Jaccard index with two empty sets counting as identical."""
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def signatures(graph: SemanticGraph) -> List[NodeSignature]:
    return [(node.label, frozenset(graph.neighbors(node.id))) for node in graph.nodes()]


def _similarity(
    query: Sequence[NodeSignature], image: Sequence[NodeSignature], taxonomy: Taxonomy
) -> float:
    if not query:
        raise EmptyQuery("Query graph has no nodes")
    if not image:
        return 0.0
    total = 0.0
    for label, neighbors in query:
        total += max(
            (taxonomy.label_similarity(label, other) + jaccard(neighbors, other_neighbors)) / 2.0
            for other, other_neighbors in image
        )
    return total / len(query)


def similarity(g_query: SemanticGraph, g_img: SemanticGraph, taxonomy: Taxonomy) -> float:
    """Mean over query nodes of the best label+neighborhood match in the image graph.

    Normalized by the query size only, so the measure is not symmetric.
    """
    return _similarity(signatures(g_query), signatures(g_img), taxonomy)


class RetrievalIndex:
    """Image SDGs with precomputed node signatures."""

    def __init__(self, entries: Iterable[Tuple[str, SceneDescriptionGraph]], taxonomy: Taxonomy):
        self.taxonomy = taxonomy
        self.graphs: Dict[str, SceneDescriptionGraph] = {}
        for image_id, sdg in entries:
            if image_id in self.graphs:
                raise InputError(f"Duplicate image id {image_id!r} in retrieval index")
            self.graphs[image_id] = sdg
        self._signatures = {image_id: signatures(g) for image_id, g in self.graphs.items()}

    def __len__(self) -> int:
        return len(self.graphs)

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.graphs

    @property
    def image_ids(self) -> List[str]:
        return sorted(self.graphs)

    def scores(self, g_query: SemanticGraph) -> Dict[str, float]:
        query = signatures(g_query)
        return {
            image_id: _similarity(query, sig, self.taxonomy)
            for image_id, sig in self._signatures.items()
        }

    def to_dict(self) -> Dict[str, Any]:
        return {image_id: self.graphs[image_id].to_dict() for image_id in self.image_ids}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], taxonomy: Taxonomy) -> 'RetrievalIndex':
        return cls(
            ((image_id, SceneDescriptionGraph.from_dict(raw)) for image_id, raw in data.items()),
            taxonomy,
        )


def rank_images(index: RetrievalIndex, g_query: SemanticGraph) -> List[str]:
    """Image ids by descending similarity, ties by image id."""
    if not len(index):
        raise InputError("Retrieval index is empty")
    scores = index.scores(g_query)
    return sorted(scores, key=lambda image_id: (-scores[image_id], image_id))


def query_graph_from_text(
    text: str, lexicon: Lexicon, taxonomy: Taxonomy
) -> SemanticGraph:
    """Parse a short sentence through the constituent path used for the KB."""
    words = [w for w in re.findall(r"[a-z_]+", text.lower()) if w not in ARTICLES | COPULA]
    if not words:
        raise EmptyQuery(f"Nothing to parse in {text!r}")
    lemmas = []
    for word in words:
        verb = lexicon.lemmatize_verb(word)
        lemmas.append(verb if verb in lexicon.verbs else lexicon.lemmatize_noun(word, taxonomy))
    return generalize(split_constituent(' '.join(lemmas), lexicon), taxonomy)


def query_graph_from_record(
    record: Mapping[str, Any], lexicon: Lexicon, taxonomy: Taxonomy
) -> SemanticGraph:
    """Query graph from a query record: an SDG, a pre-parsed graph or a sentence."""
    if 'sdg' in record:
        return SceneDescriptionGraph.from_dict(record['sdg'])
    if 'nodes' in record:
        parsed = AnnotationRecord.from_dict({'image_id': record.get('image_id', ''), **record})
        return generalize(SemanticGraph.from_annotation(parsed), taxonomy)
    if 'sentence' in record:
        return query_graph_from_text(record['sentence'], lexicon, taxonomy)
    raise InputError(f"Query {record.get('query_id')!r} has no sentence, graph or sdg")


@dataclass
class RankingReport:
    recall_at: Dict[int, float]
    median_rank: Optional[float]
    per_query: List[Tuple[str, int]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'recall_at': {str(k): v for k, v in self.recall_at.items()},
            'median_rank': self.median_rank,
            'per_query': [{'query_id': q, 'rank': r} for q, r in self.per_query],
        }

    def to_table(self) -> str:
        row = {f"R@{k}": round(100.0 * v, 1) for k, v in self.recall_at.items()}
        row['Med r'] = self.median_rank
        return pd.DataFrame([row], index=['queries']).to_string()


def compute_metrics(
    ranks: Mapping[str, int] | Sequence[int],
    recall_at: Sequence[int] = RECALL_AT,
) -> RankingReport:
    """Recall@K and median rank of the ground-truth image per query."""
    if isinstance(ranks, Mapping):
        per_query = [(str(q), int(r)) for q, r in ranks.items()]
    else:
        per_query = [(str(i), int(r)) for i, r in enumerate(ranks)]
    if any(r < 1 for _, r in per_query):
        raise InputError("Ranks must be at least 1")
    values = np.array([r for _, r in per_query], dtype=float)
    if not len(values):
        return RankingReport({k: 0.0 for k in recall_at}, None, per_query)
    return RankingReport(
        recall_at={k: float(np.mean(values <= k)) for k in recall_at},
        median_rank=float(np.median(values)),
        per_query=per_query,
    )


@dataclass
class EvalReport:
    """Micro-averaged precision and accuracy (recall against gold) per node type."""
    counts: Dict[str, Dict[str, int]]
    unpredicted: List[str] = field(default_factory=list)

    def precision(self, kind: str) -> float:
        c = self.counts[kind]
        return c['hits'] / c['predicted'] if c['predicted'] else 0.0

    def accuracy(self, kind: str) -> float:
        c = self.counts[kind]
        return c['hits'] / c['gold'] if c['gold'] else 0.0

    def to_dict(self) -> Dict[str, Any]:
        report: Dict[str, Any] = {
            kind: {'accuracy': self.accuracy(kind), 'precision': self.precision(kind), **c}
            for kind, c in self.counts.items()
        }
        report['unpredicted'] = list(self.unpredicted)
        return report

    def to_table(self) -> str:
        frame = pd.DataFrame(
            {
                'accuracy (%)': [round(100 * self.accuracy(k), 1) for k in self.counts],
                'precision (%)': [round(100 * self.precision(k), 1) for k in self.counts],
            },
            index=list(self.counts),
        )
        return frame.to_string()


def eval_entities_events(
    predicted: Mapping[str, Tuple[Iterable[str], Iterable[str]]],
    gold: Mapping[str, GoldRecord],
) -> EvalReport:
    """Compare predicted (entities, events) per image with gold sets.

    Gold images without a prediction count as misses: their labels add to
    the gold totals and nothing to the hits.
    """
    missing = [image_id for image_id in predicted if image_id not in gold]
    if missing:
        raise MissingGold(missing)
    unpredicted = sorted(image_id for image_id in gold if image_id not in predicted)
    if unpredicted:
        logger.warning(f"No prediction for {len(unpredicted)} gold images, counted as misses: {unpredicted}")

    counts = {kind: {'hits': 0, 'predicted': 0, 'gold': 0} for kind in ('entities', 'events')}
    for image_id, truth in gold.items():
        entities, events = predicted.get(image_id, ((), ()))
        for kind, pred, expected in (
            ('entities', set(entities), truth.entities),
            ('events', set(events), truth.events),
        ):
            counts[kind]['hits'] += len(pred & expected)
            counts[kind]['predicted'] += len(pred)
            counts[kind]['gold'] += len(expected)
    return EvalReport(counts, unpredicted)
