"""JSON persistence of knowledge bases, Bayesian networks and retrieval indices."""
import json
import logging
from pathlib import Path
from typing import AbstractSet, Any

from sdgraph.bayesnet import BayesNet
from sdgraph.config import EDGE_VOCABULARY
from sdgraph.errors import InputError
from sdgraph.ontology import Taxonomy
from sdgraph.retrieval import RetrievalIndex
from sdgraph.semgraph import KnowledgeBase
from sdgraph.utils import convert_numpy_types

logger = logging.getLogger(__name__)


def save_json(path: Path, data: Any) -> Path:
    """Write JSON with sorted keys so reruns are byte-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(convert_numpy_types(data), sort_keys=True, indent=1, ensure_ascii=False) + "\n",
        encoding='utf-8',
    )
    return path


def load_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"Cannot read {path}: {e}") from e


def save_kb(path: Path, kb: KnowledgeBase) -> Path:
    logger.info(f"Saving {kb!r} to {path}")
    return save_json(path, kb.to_dict())


def load_kb(path: Path, edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY) -> KnowledgeBase:
    kb = KnowledgeBase.from_dict(load_json(path), edge_vocabulary)
    logger.info(f"Loaded {kb!r} from {path}")
    return kb


def save_bn(path: Path, bn: BayesNet) -> Path:
    return save_json(path, bn.to_dict())


def load_bn(path: Path) -> BayesNet:
    return BayesNet.from_dict(load_json(path))


def save_index(path: Path, index: RetrievalIndex) -> Path:
    return save_json(path, index.to_dict())


def load_index(path: Path, taxonomy: Taxonomy) -> RetrievalIndex:
    return RetrievalIndex.from_dict(load_json(path), taxonomy)
