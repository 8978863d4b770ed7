"""Loading of annotations, detections and constituents, and BN training tuples."""
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
import json
import logging
from pathlib import Path
from typing import AbstractSet, Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from sdgraph.config import BN_MAX_VARIABLES, CONSTITUENT_RANK_LIMIT, EDGE_VOCABULARY
from sdgraph.errors import (
    EmptyAfterNormalization, InputError, MissingSceneDetection, UnparseablePhrase,
)
from sdgraph.models import (
    AnnotationRecord, BnDataset, ConstituentPhrase, DetectionSet, NodeKind,
)
from sdgraph.ontology import SceneMetaTable, Taxonomy
from sdgraph.semgraph import SemanticGraph
from sdgraph.storage.jsonl import read_jsonl

logger = logging.getLogger(__name__)

CONTENT_TAGS: Dict[str, str] = {'NOUN': 'N', 'PROPN': 'N', 'VERB': 'V', 'ADJ': 'A'}
PENN_PREFIXES: Dict[str, str] = {'NN': 'N', 'VB': 'V', 'JJ': 'A'}


def coarse_tag(pos: str) -> Optional[str]:
    """Map a universal or Penn POS tag to N, V or A; None for function words."""
    pos = pos.upper()
    if pos in CONTENT_TAGS:
        return CONTENT_TAGS[pos]
    return PENN_PREFIXES.get(pos[:2])


@dataclass
class Lexicon:
    """Word lists and exception tables for lemmatization and morphology."""
    verbs: FrozenSet[str] = frozenset()
    adjectives: FrozenSet[str] = frozenset()
    noun_lemmas: Dict[str, str] = field(default_factory=dict)
    verb_lemmas: Dict[str, str] = field(default_factory=dict)
    ing_forms: Dict[str, str] = field(default_factory=dict)
    plurals: Dict[str, str] = field(default_factory=dict)
    plural_only: FrozenSet[str] = frozenset()

    @classmethod
    def from_file(cls, path: Path) -> 'Lexicon':
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"Cannot read lexicon {path}: {e}") from e
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'Lexicon':
        return cls(
            verbs=frozenset(data.get('verbs', [])),
            adjectives=frozenset(data.get('adjectives', [])),
            noun_lemmas=dict(data.get('noun_lemmas', {})),
            verb_lemmas=dict(data.get('verb_lemmas', {})),
            ing_forms=dict(data.get('ing_forms', {})),
            plurals=dict(data.get('plurals', {})),
            plural_only=frozenset(data.get('plural_only', [])),
        )

    def with_verbs(self, extra: Iterable[str]) -> 'Lexicon':
        """Copy of this lexicon that also knows ``extra`` as verb lemmas."""
        return Lexicon(
            verbs=self.verbs | frozenset(extra),
            adjectives=self.adjectives,
            noun_lemmas=self.noun_lemmas,
            verb_lemmas=self.verb_lemmas,
            ing_forms=self.ing_forms,
            plurals=self.plurals,
            plural_only=self.plural_only,
        )

    def lemmatize_noun(self, word: str, known: AbstractSet[str] = frozenset()) -> str:
        if word in self.noun_lemmas:
            return self.noun_lemmas[word]
        if word in self.plural_only or word in known:
            return word
        if word.endswith(('ss', 'us', 'is')) or len(word) <= 3:
            return word
        if word.endswith('ies'):
            return word[:-3] + 'y'
        if word.endswith(('ches', 'shes', 'xes', 'zes', 'sses')):
            return word[:-2]
        if word.endswith('s'):
            return word[:-1]
        return word

    def lemmatize_verb(self, word: str) -> str:
        if word in self.verb_lemmas:
            return self.verb_lemmas[word]
        if word in self.verbs:
            return word
        for suffix in ('ing', 'ed', 'es', 's'):
            if not word.endswith(suffix) or len(word) <= len(suffix) + 1:
                continue
            stem = word[:-len(suffix)]
            for candidate in (stem, stem + 'e', stem[:-1] if stem[-1:] == stem[-2:-1] else None):
                if candidate and candidate in self.verbs:
                    return candidate
            if suffix == 's' and not word.endswith('ss'):
                return stem
        return word

    def lemmatize(self, word: str, tag: str, known: AbstractSet[str] = frozenset()) -> str:
        if tag == 'N':
            return self.lemmatize_noun(word, known)
        if tag == 'V':
            return self.lemmatize_verb(word)
        return word


def load_stopwords(path: Path) -> FrozenSet[str]:
    try:
        lines = Path(path).read_text(encoding='utf-8').splitlines()
    except OSError as e:
        raise InputError(f"Cannot read stopwords {path}: {e}") from e
    return frozenset(w.strip().lower() for w in lines if w.strip() and not w.startswith('#'))


def normalize_constituent(
    phrase: ConstituentPhrase,
    stopwords: AbstractSet[str],
    taxonomy: Taxonomy,
    lexicon: Lexicon,
) -> str:
    """Canonical phrase: content words only, lemmatized, nouns generalized."""
    words = []
    for surface, pos in phrase.tokens:
        word = surface.lower()
        tag = coarse_tag(pos)
        if tag is None or word in stopwords:
            continue
        lemma = lexicon.lemmatize(word, tag, taxonomy)
        if tag == 'N':
            resolved = taxonomy.resolve(lemma)
            if resolved is not None:
                lemma = taxonomy.superclass_of(resolved)
        words.append(lemma)
    if not words:
        raise EmptyAfterNormalization(
            f"Nothing left of {' '.join(t for t, _ in phrase.tokens)!r}"
        )
    return ' '.join(words)


def rank_constituents(
    phrases: Mapping[str, int] | Iterable[Tuple[str, int]],
    limit: int = CONSTITUENT_RANK_LIMIT,
) -> List[Tuple[str, int]]:
    """Identical phrases pooled, then sorted by frequency desc, ties lexicographic."""
    items = phrases.items() if isinstance(phrases, Mapping) else phrases
    totals: Counter = Counter()
    for phrase, frequency in items:
        totals[phrase] += frequency
    return sorted(totals.items(), key=lambda item: (-item[1], item[0]))[:limit]


def split_constituent(
    phrase: str,
    lexicon: Lexicon,
    edge_vocabulary: AbstractSet[str] = EDGE_VOCABULARY,
) -> SemanticGraph:
    """Partial semantic graph of a canonical phrase.

    Accepted shapes are ``N``, ``N V``, ``N V N`` and ``N A``; the noun after
    a verb is the recipient even when it doubles as an adjective.
    """
    words = phrase.split()
    tags = []
    for word in words:
        if word in lexicon.verbs:
            tags.append('V')
        elif word in lexicon.adjectives:
            tags.append('A')
        else:
            tags.append('N')
    if tags[:2] == ['N', 'V'] and len(tags) == 3:
        tags[2] = 'N'
    shape = ''.join(tags)

    graph = SemanticGraph(edge_vocabulary)
    if shape == 'N':
        graph.add_node('n0', words[0], NodeKind.ENTITY)
    elif shape in ('NV', 'NVN'):
        graph.add_node('e0', words[1], NodeKind.EVENT)
        graph.add_node('n0', words[0], NodeKind.ENTITY)
        graph.add_edge('e0', 'agent', 'n0')
        if shape == 'NVN':
            graph.add_node('n1', words[2], NodeKind.ENTITY)
            graph.add_edge('e0', 'recipient', 'n1')
    elif shape == 'NA':
        graph.add_node('n0', words[0], NodeKind.ENTITY)
        graph.add_node('t0', words[1], NodeKind.TRAIT)
        graph.add_edge('n0', 'trait', 't0')
    else:
        raise UnparseablePhrase(f"Cannot split {phrase!r} (shape {shape or 'empty'})")
    return graph


@dataclass(frozen=True)
class AvcRule:
    """Rule that detects an AVC from one image's annotation labels."""
    avc: str
    min_person_count: Optional[int] = None
    lemma_set: FrozenSet[str] = frozenset()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'AvcRule':
        try:
            trigger = data['trigger']
            rule = cls(
                avc=str(data['avc']),
                min_person_count=trigger.get('min_person_count'),
                lemma_set=frozenset(trigger.get('lemma_set', [])),
            )
        except (KeyError, AttributeError) as e:
            raise InputError(f"Malformed AVC rule: {e}") from e
        if rule.min_person_count is None and not rule.lemma_set:
            raise InputError(f"AVC rule {rule.avc!r} has no trigger")
        return rule

    def fires(self, person_count: int, labels: AbstractSet[str]) -> bool:
        if self.min_person_count is not None and person_count < self.min_person_count:
            return False
        return self.lemma_set <= labels


def load_annotations(path: Path) -> List[AnnotationRecord]:
    return read_jsonl(path, AnnotationRecord.from_dict)


def load_detections(path: Path) -> List[DetectionSet]:
    detections = read_jsonl(path, DetectionSet.from_dict)
    seen = set()
    for detection in detections:
        if detection.image_id in seen:
            raise InputError(f"Duplicate detections for image {detection.image_id} in {path}")
        seen.add(detection.image_id)
    return detections


def load_constituents(path: Path) -> List[ConstituentPhrase]:
    return read_jsonl(path, ConstituentPhrase.from_dict)


def load_avc_rules(path: Path) -> List[AvcRule]:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"Cannot read AVC rules {path}: {e}") from e
    return [AvcRule.from_dict(rule) for rule in data]


@dataclass(frozen=True)
class GoldRecord:
    image_id: str
    entities: FrozenSet[str]
    events: FrozenSet[str]

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'GoldRecord':
        try:
            return cls(
                str(data['image_id']),
                frozenset(data.get('entities', [])),
                frozenset(data.get('events', [])),
            )
        except (KeyError, TypeError) as e:
            raise InputError(f"Malformed gold record: {e}") from e


def load_gold(path: Path) -> Dict[str, GoldRecord]:
    return {g.image_id: g for g in read_jsonl(path, GoldRecord.from_dict)}


def _entity_label(label: str, taxonomy: Taxonomy) -> str:
    resolved = taxonomy.resolve(label)
    return taxonomy.superclass_of(resolved) if resolved is not None else label


def build_bn_dataset(
    records: Sequence[AnnotationRecord],
    scene_detections: Mapping[str, DetectionSet],
    scene_meta: SceneMetaTable,
    taxonomy: Taxonomy,
    avc_rules: Sequence[AvcRule] = (),
    max_variables: int = BN_MAX_VARIABLES,
) -> BnDataset:
    """One binary tuple per training image over entity and AVC variables.

    Entity bits come from the generalized annotation Entity labels; AVC bits
    from the rules and from every AVC the top-scoring scene lists in S_M.
    """
    by_image: Dict[str, List[AnnotationRecord]] = OrderedDict()
    for record in records:
        by_image.setdefault(record.image_id, []).append(record)

    missing = [
        image_id for image_id in by_image
        if image_id not in scene_detections or scene_detections[image_id].top_scene is None
    ]
    if missing:
        raise MissingSceneDetection(missing)

    active: Dict[str, set] = {}
    for image_id, image_records in by_image.items():
        bits: set = set()
        if not any(r.nodes for r in image_records):
            logger.warning(f"Image {image_id} has no annotation nodes; emitting an all-zero tuple")
            active[image_id] = bits
            continue

        person_count = 0
        for record in image_records:
            entities = [
                _entity_label(n.label, taxonomy)
                for n in record.nodes if n.kind == NodeKind.ENTITY
            ]
            bits.update(entities)
            person_count = max(person_count, entities.count('person'))
        lemmas = {n.label for r in image_records for n in r.nodes} | bits
        for rule in avc_rules:
            if rule.fires(person_count, lemmas):
                bits.add(rule.avc)

        scene = scene_detections[image_id].top_scene.label
        meta = scene_meta.resolve(scene)
        if meta is None:
            logger.warning(f"Top scene {scene!r} of {image_id} is not in S_M")
        else:
            bits.update(meta.avc_names)
        active[image_id] = bits

    frequency: Counter = Counter(v for bits in active.values() for v in bits)
    kept = sorted(frequency, key=lambda v: (-frequency[v], v))[:max_variables]
    if len(frequency) > max_variables:
        logger.info(f"Capped BN variables at {max_variables} of {len(frequency)}")
    variables = sorted(kept)
    tuples = [[1 if v in active[image_id] else 0 for v in variables] for image_id in active]
    return BnDataset.from_tuples(variables, tuples, index=list(active))
