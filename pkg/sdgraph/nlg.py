"""Template-based surface realization of scene description graphs."""
from collections import Counter
from dataclasses import dataclass
import logging
import re
from string import Template
from typing import Dict, List, Mapping, Optional, Tuple

from sdgraph.config import ALPHA_HIGH
from sdgraph.ingest import Lexicon
from sdgraph.models import DetectionSet, NodeKind
from sdgraph.semgraph import GraphEdge, SceneDescriptionGraph

logger = logging.getLogger(__name__)

PLURAL_EXCEPTIONS: Dict[str, str] = {
    'person': 'people',
    'man': 'men',
    'woman': 'women',
    'child': 'children',
    'foot': 'feet',
    'mouse': 'mice',
    'sheep': 'sheep',
}
VOWELS = 'aeiou'


@dataclass(frozen=True)
class RealizationRule:
    """Sentence template keyed by the edge pattern it covers."""
    name: str
    template: Template

    def render(self, **slots: str) -> str:
        return re.sub(r'\s+', ' ', self.template.substitute(**slots)).strip()


AGENT_RECIPIENT = RealizationRule('agent+recipient', Template('$subject is $verb $object'))
AGENT_ONLY = RealizationRule('agent', Template('$subject is $verb'))
EVENT_LOCATION = RealizationRule('event+location', Template('$clause at the $place'))
ENTITY_LOCATION = RealizationRule('entity+location', Template('$subject is in the $scene'))
SCENE_COMPONENT = RealizationRule('scene+component', Template('there is $avc in the scene'))
ENTITY_TRAIT = RealizationRule('entity+trait', Template('the $entity is $trait'))
OBJECT_COUNT = RealizationRule('count', Template('$count $objects are in the scene'))
OTHER_RELATION = RealizationRule('relation', Template('the $source has $relation $target'))


def _words(label: str) -> str:
    return label.replace('_', ' ')


def ing_form(verb: str, lexicon: Optional[Lexicon] = None) -> str:
    """Present participle: exception lexicon first, then suffix rules."""
    if lexicon is not None and verb in lexicon.ing_forms:
        return lexicon.ing_forms[verb]
    if verb.endswith('ie'):
        return verb[:-2] + 'ying'
    if verb.endswith('e') and not verb.endswith('ee') and len(verb) > 2:
        return verb[:-1] + 'ing'
    syllables = re.findall(f'[{VOWELS}]+', verb)
    if (
        len(syllables) == 1 and len(verb) >= 3
        and verb[-1] not in VOWELS + 'wxy'
        and verb[-2] in VOWELS
        and verb[-3] not in VOWELS
    ):
        return verb + verb[-1] + 'ing'
    return verb + 'ing'


def article(noun: str, lexicon: Optional[Lexicon] = None) -> str:
    """Indefinite article; plural-only nouns take none."""
    if lexicon is not None and noun in lexicon.plural_only:
        return ''
    return 'an' if noun[:1] in VOWELS else 'a'


def plural(noun: str, lexicon: Optional[Lexicon] = None) -> str:
    if lexicon is not None:
        if noun in lexicon.plurals:
            return lexicon.plurals[noun]
        if noun in lexicon.plural_only:
            return noun
    if noun in PLURAL_EXCEPTIONS:
        return PLURAL_EXCEPTIONS[noun]
    if noun.endswith(('s', 'x', 'z', 'ch', 'sh')):
        return noun + 'es'
    if noun.endswith('y') and noun[-2:-1] not in VOWELS:
        return noun[:-1] + 'ies'
    return noun + 's'


def _noun_phrase(noun: str, lexicon: Optional[Lexicon]) -> str:
    noun = _words(noun)
    return f"{article(noun, lexicon)} {noun}".strip()


class SentenceRealizer:
    """Turns SDG edges into sentences, one per event plus one per remaining edge."""

    def __init__(self, lexicon: Optional[Lexicon] = None, alpha_h: float = ALPHA_HIGH):
        self.lexicon = lexicon
        self.alpha_h = alpha_h

    def event_sentence(self, sdg: SceneDescriptionGraph, event_id: str) -> str:
        """One clause per event, closed by its location when it has one.

        A located entity wins over the scene node; ties go to the smallest label.
        """
        outgoing: Dict[str, List[str]] = {}
        scene_located = False
        for edge in sdg.incident_edges(event_id):
            if edge.source != event_id:
                continue
            if edge.label == 'location' and edge.target == sdg.scene_id:
                scene_located = True
                continue
            outgoing.setdefault(edge.label, []).append(sdg.label(edge.target))
        places = sorted(outgoing.get('location', [])) or ([sdg.scene] if scene_located else [])
        clause = self._event_clause(sdg, event_id, outgoing)
        if places:
            return EVENT_LOCATION.render(clause=clause, place=_words(places[0]))
        return clause

    def _event_clause(
        self, sdg: SceneDescriptionGraph, event_id: str, outgoing: Mapping[str, List[str]]
    ) -> str:
        agents = sorted(outgoing.get('agent', []))
        recipients = sorted(outgoing.get('recipient', []))
        subject = _noun_phrase(agents[0], self.lexicon) if agents else 'someone'
        verb = ing_form(sdg.label(event_id), self.lexicon)
        if recipients:
            return AGENT_RECIPIENT.render(
                subject=subject, verb=_words(verb), object=_noun_phrase(recipients[0], self.lexicon)
            )
        return AGENT_ONLY.render(subject=subject, verb=_words(verb))

    def edge_sentence(self, sdg: SceneDescriptionGraph, edge: GraphEdge) -> str:
        source, target = sdg.node(edge.source), sdg.node(edge.target)
        if edge.label == 'component' and source.kind == NodeKind.SCENE:
            return SCENE_COMPONENT.render(avc=_words(target.label))
        if edge.label == 'location' and target.kind == NodeKind.SCENE:
            return ENTITY_LOCATION.render(
                subject=_noun_phrase(source.label, self.lexicon), scene=_words(target.label)
            )
        if edge.label == 'trait':
            return ENTITY_TRAIT.render(entity=_words(source.label), trait=_words(target.label))
        return OTHER_RELATION.render(
            source=_words(source.label), relation=_words(edge.label), target=_words(target.label)
        )

    def count_sentences(self, detections: Optional[DetectionSet]) -> List[str]:
        if detections is None:
            return []
        counts = Counter(o.label for o in detections.objects if o.score > self.alpha_h)
        return sorted(
            OBJECT_COUNT.render(count=str(n), objects=_words(plural(label, self.lexicon)))
            for label, n in counts.items() if n >= 2
        )

    def realize(
        self,
        sdg: SceneDescriptionGraph,
        detections: Optional[DetectionSet] = None,
        event_scores: Optional[Mapping[str, float]] = None,
    ) -> List[str]:
        """Event sentences by score desc, then object counts, then the rest sorted."""
        event_scores = event_scores or {}
        events = sdg.nodes(NodeKind.EVENT)
        if not sdg.edge_count and not events:
            return []

        ranked: List[Tuple[float, str]] = [
            (-event_scores.get(e.label, 0.0), self.event_sentence(sdg, e.id)) for e in events
        ]
        event_ids = {e.id for e in events}
        others = sorted(
            self.edge_sentence(sdg, edge)
            for edge in sdg.edges()
            if edge.source not in event_ids and edge.target not in event_ids
        )
        return [text for _, text in sorted(ranked)] + self.count_sentences(detections) + others


def realize(
    sdg: SceneDescriptionGraph,
    detections: Optional[DetectionSet] = None,
    lexicon: Optional[Lexicon] = None,
    event_scores: Optional[Mapping[str, float]] = None,
    alpha_h: float = ALPHA_HIGH,
) -> List[str]:
    return SentenceRealizer(lexicon, alpha_h).realize(sdg, detections, event_scores)


def to_text(sentences: List[str]) -> str:
    """Plain-text rendering, one sentence per line."""
    return ''.join(f"{s}\n" for s in sentences)
