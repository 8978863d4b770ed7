"""Data models for the application."""
from dataclasses import dataclass, field
from enum import Enum
import logging
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from sdgraph.config import TOP_CONSTITUENTS, TOP_SCENES
from sdgraph.errors import InputError, InvalidData

logger = logging.getLogger(__name__)


class NodeKind(str, Enum):
    """Kinds of graph vertices.

    Knowledge-base graphs only hold entities, events and traits; scene
    description graphs add one scene node and any number of AVC nodes.
    """
    ENTITY = 'Entity'
    EVENT = 'Event'
    TRAIT = 'Trait'
    SCENE = 'Scene'
    AVC = 'AVC'

    @classmethod
    def parse(cls, value: str) -> 'NodeKind':
        for kind in cls:
            if kind.value.lower() == str(value).lower():
                return kind
        raise InputError(f"Unknown node kind: {value!r}")


def _check_score(score: float, where: str) -> float:
    score = float(score)
    if not 0.0 <= score <= 1.0:
        raise InputError(f"Score {score} out of [0, 1] in {where}")
    return score


@dataclass(frozen=True)
class ScoredLabel:
    """A label with its detection confidence P_r(label | I)."""
    label: str
    score: float


@dataclass(frozen=True)
class DetectedObject:
    """An object detection: class label, pixel box [x, y, w, h] and score."""
    label: str
    box: Tuple[float, float, float, float]
    score: float


@dataclass
class DetectionSet:
    """Per-image perception output.

    Scenes and constituents are kept sorted by descending score and capped
    at the top five scenes and top ten constituents.
    """
    image_id: str
    objects: List[DetectedObject] = field(default_factory=list)
    scenes: List[ScoredLabel] = field(default_factory=list)
    constituents: List[ScoredLabel] = field(default_factory=list)

    def __post_init__(self):
        for obj in self.objects:
            _check_score(obj.score, f"objects of {self.image_id}")
        for item in (*self.scenes, *self.constituents):
            _check_score(item.score, f"image {self.image_id}")
        self.scenes = sorted(self.scenes, key=lambda s: (-s.score, s.label))[:TOP_SCENES]
        self.constituents = sorted(
            self.constituents, key=lambda c: (-c.score, c.label)
        )[:TOP_CONSTITUENTS]

    @property
    def top_scene(self) -> ScoredLabel | None:
        return self.scenes[0] if self.scenes else None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'DetectionSet':
        try:
            objects = [
                DetectedObject(
                    label=str(o['label']).lower(),
                    box=tuple(float(v) for v in o.get('box', (0, 0, 0, 0))),
                    score=float(o['score']),
                )
                for o in data.get('objects', [])
            ]
            scenes = [ScoredLabel(str(s['label']), float(s['score'])) for s in data.get('scenes', [])]
            constituents = [
                ScoredLabel(str(c['label']).lower(), float(c['score']))
                for c in data.get('constituents', [])
            ]
            return cls(str(data['image_id']), objects, scenes, constituents)
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed detection record: {e}") from e

    def to_dict(self) -> Dict[str, Any]:
        return {
            'image_id': self.image_id,
            'objects': [{'label': o.label, 'box': list(o.box), 'score': o.score} for o in self.objects],
            'scenes': [{'label': s.label, 'score': s.score} for s in self.scenes],
            'constituents': [{'label': c.label, 'score': c.score} for c in self.constituents],
        }


@dataclass(frozen=True)
class ConstituentPhrase:
    """A free-form constituent annotation with POS-tagged tokens."""
    tokens: Tuple[Tuple[str, str], ...]
    frequency: int = 1

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ConstituentPhrase':
        try:
            tokens = tuple((str(t['t']), str(t['pos']).upper()) for t in data['tokens'])
            frequency = int(data.get('freq', 1))
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"Malformed constituent record: {e}") from e
        if frequency < 1:
            raise InputError(f"Constituent frequency must be positive, got {frequency}")
        return cls(tokens, frequency)


@dataclass(frozen=True)
class AnnotationNode:
    id: str
    label: str
    kind: NodeKind


@dataclass(frozen=True)
class AnnotationRecord:
    """A pre-parsed semantic graph of one annotation sentence."""
    image_id: str
    sentence_id: str
    nodes: Tuple[AnnotationNode, ...]
    edges: Tuple[Tuple[str, str, str], ...]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise InputError(f"Duplicate node ids in {self.image_id}/{self.sentence_id}")
        for source, _, target in self.edges:
            if source not in ids or target not in ids:
                raise InputError(
                    f"Edge {source}->{target} references an undeclared node "
                    f"in {self.image_id}/{self.sentence_id}"
                )
        for node in self.nodes:
            if not node.label:
                raise InputError(f"Empty label for node {node.id} in {self.image_id}")

    @property
    def source(self) -> Tuple[str, str]:
        return (self.image_id, self.sentence_id)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'AnnotationRecord':
        try:
            nodes = tuple(
                AnnotationNode(str(n['id']), str(n['label']).lower(), NodeKind.parse(n['kind']))
                for n in data.get('nodes', [])
            )
            edges = tuple(
                (str(e['from']), str(e['label']), str(e['to'])) for e in data.get('edges', [])
            )
            return cls(str(data['image_id']), str(data.get('sentence_id', '0')), nodes, edges)
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed annotation record: {e}") from e


@dataclass
class BnDataset:
    """Binary training tuples, one row per image and one column per variable."""
    variables: Tuple[str, ...]
    frame: pd.DataFrame

    def __post_init__(self):
        self.variables = tuple(self.variables)
        if list(self.frame.columns) != list(self.variables):
            raise InvalidData("Dataset columns do not match the variable list")
        values = self.frame.to_numpy()
        if values.size and not np.isin(values, (0, 1)).all():
            raise InvalidData("Dataset entries must be 0 or 1")
        self.frame = self.frame.astype(np.uint8)

    @classmethod
    def from_tuples(
        cls,
        variables: Sequence[str],
        tuples: Sequence[Sequence[int]],
        index: Sequence[str] | None = None,
    ) -> 'BnDataset':
        widths = {len(t) for t in tuples}
        if widths and widths != {len(variables)}:
            raise InvalidData(
                f"Tuple widths {sorted(widths)} differ from {len(variables)} variables"
            )
        frame = pd.DataFrame(list(tuples), columns=list(variables), index=index)
        return cls(tuple(variables), frame)

    @property
    def tuples(self) -> np.ndarray:
        return self.frame.to_numpy(dtype=np.uint8)

    def __len__(self) -> int:
        return len(self.frame)
