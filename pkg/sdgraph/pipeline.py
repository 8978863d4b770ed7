"""Batch stages behind the command line: configuration, KB building, learning, inference, evaluation."""
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, fields, replace
import json
import logging
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

from sdgraph.bayesnet import BayesNet, TabuConfig, fit_cpts, learn_structure
from sdgraph.config import (
    BN_MAX_VARIABLES, CONSTITUENT_RANK_LIMIT, CPT_SMOOTHING_ALPHA, DATA_DIR,
    DEFAULT_OUTPUT_DIR, DEFAULT_RESOURCE_FILES, DEFAULT_WORKERS, EDGE_VOCABULARY, LOG_LEVEL,
    RANDOM_SEED,
)
from sdgraph.errors import ConfigError, EmptyAfterNormalization, MissingGold, SdgError
from sdgraph.ingest import (
    AvcRule, Lexicon, build_bn_dataset, load_annotations, load_avc_rules, load_constituents,
    load_detections, load_gold, load_stopwords, normalize_constituent, rank_constituents,
)
from sdgraph.models import AnnotationRecord, DetectionSet, NodeKind
from sdgraph.nlg import to_text
from sdgraph.ontology import ObjectMetaTable, SceneMetaTable, Taxonomy
from sdgraph.reasoner import CompatRule, Reasoner, ReasonerConfig, load_compat_rules, sdg_from_result
from sdgraph.retrieval import (
    EvalReport, RankingReport, RetrievalIndex, compute_metrics, eval_entities_events,
    query_graph_from_record, rank_images,
)
from sdgraph.semgraph import KnowledgeBase, SemanticGraph, generalize, to_dot
from sdgraph.storage.artifacts import load_bn, load_kb, save_bn, save_index, save_json, save_kb
from sdgraph.storage.jsonl import OrderedSink, iter_jsonl, write_jsonl
from sdgraph.visualizer import SdgVisualizer

logger = logging.getLogger(__name__)


@dataclass
class Resources:
    """Parsed lexical resources shared by every stage."""
    taxonomy: Taxonomy
    object_meta: ObjectMetaTable
    scene_meta: SceneMetaTable
    stopwords: FrozenSet[str]
    compat_rules: List[CompatRule]
    avc_rules: List[AvcRule]
    lexicon: Lexicon
    edge_vocabulary: FrozenSet[str]


def _dataclass_from(cls, data: Mapping[str, Any], where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"Unknown keys in {where}: {sorted(unknown)}")
    return cls(**data)


@dataclass
class RunConfig:
    resource_paths: Dict[str, Path] = field(
        default_factory=lambda: {k: DATA_DIR / v for k, v in DEFAULT_RESOURCE_FILES.items()}
    )
    reasoner: ReasonerConfig = field(default_factory=ReasonerConfig)
    tabu: TabuConfig = field(default_factory=TabuConfig)
    smoothing_alpha: float = CPT_SMOOTHING_ALPHA
    max_variables: int = BN_MAX_VARIABLES
    constituent_top_k: int = CONSTITUENT_RANK_LIMIT
    seed: int = RANDOM_SEED
    workers: int = DEFAULT_WORKERS
    output_dir: Path = DEFAULT_OUTPUT_DIR
    log_level: str = LOG_LEVEL
    extra_edge_labels: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.max_variables < 1 or self.constituent_top_k < 1:
            raise ConfigError("max_variables and constituent_top_k must be positive")
        if self.tabu.random_seed != self.seed:
            self.tabu = replace(self.tabu, random_seed=self.seed)

    @classmethod
    def from_file(cls, path: Path) -> 'RunConfig':
        """Read a JSON run configuration; resource paths resolve against its directory."""
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        return cls.from_dict(data, path.parent)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path = Path('.')) -> 'RunConfig':
        data = dict(data)
        paths = {k: DATA_DIR / v for k, v in DEFAULT_RESOURCE_FILES.items()}
        for key, value in data.pop('resources', {}).items():
            if key not in DEFAULT_RESOURCE_FILES:
                raise ConfigError(f"Unknown resource {key!r}")
            paths[key] = (base_dir / value) if not Path(value).is_absolute() else Path(value)
        try:
            reasoner = _dataclass_from(ReasonerConfig, data.pop('reasoner', {}), 'reasoner')
            seed = int(data.get('seed', RANDOM_SEED))
            tabu = _dataclass_from(
                TabuConfig, {**data.pop('tabu', {}), 'random_seed': seed}, 'tabu'
            )
            if 'output_dir' in data:
                data['output_dir'] = base_dir / data['output_dir']
            if 'extra_edge_labels' in data:
                data['extra_edge_labels'] = tuple(data['extra_edge_labels'])
            return _dataclass_from(
                cls, {**data, 'resource_paths': paths, 'reasoner': reasoner, 'tabu': tabu}, 'config'
            )
        except TypeError as e:
            raise ConfigError(f"Invalid config value: {e}") from e

    def with_overrides(self, **overrides: Any) -> 'RunConfig':
        """Copy with command-line overrides applied; None values are ignored."""
        given = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **given)

    @property
    def edge_vocabulary(self) -> FrozenSet[str]:
        return EDGE_VOCABULARY | frozenset(self.extra_edge_labels)

    def load_resources(self) -> Resources:
        """Parse every referenced resource file before any stage runs."""
        for name, path in self.resource_paths.items():
            if not Path(path).is_file():
                raise ConfigError(f"Resource {name!r} not found at {path}")
        paths = self.resource_paths
        taxonomy = Taxonomy.from_file(paths['taxonomy'])
        resources = Resources(
            taxonomy=taxonomy,
            object_meta=ObjectMetaTable.from_file(paths['object_meta'], taxonomy),
            scene_meta=SceneMetaTable.from_file(paths['scene_meta']),
            stopwords=load_stopwords(paths['stopwords']),
            compat_rules=load_compat_rules(paths['compat_rules'], self.edge_vocabulary),
            avc_rules=load_avc_rules(paths['avc_rules']),
            lexicon=Lexicon.from_file(paths['lexicon']),
            edge_vocabulary=self.edge_vocabulary,
        )
        logger.info(f"Loaded resources: taxonomy of {len(taxonomy)} labels, {len(resources.compat_rules)} rules")
        return resources


def build_kb(
    records: Sequence[AnnotationRecord],
    taxonomy: Taxonomy,
    edge_vocabulary: FrozenSet[str] = EDGE_VOCABULARY,
) -> KnowledgeBase:
    """Generalize and merge every annotation graph into one knowledge base."""
    kb = KnowledgeBase(edge_vocabulary)
    for record in records:
        graph = SemanticGraph.from_annotation(record, edge_vocabulary)
        kb.merge(generalize(graph, taxonomy), record.source)
    return kb


def cmd_kb_build(
    annotations: Path,
    config: RunConfig,
    constituents: Optional[Path] = None,
) -> Dict[str, int]:
    resources = config.load_resources()
    records = load_annotations(annotations)
    kb = build_kb(records, resources.taxonomy, resources.edge_vocabulary)
    save_kb(config.output_dir / 'kb.json', kb)

    if constituents is not None:
        phrases = []
        for phrase in load_constituents(constituents):
            try:
                canonical = normalize_constituent(
                    phrase, resources.stopwords, resources.taxonomy, resources.lexicon
                )
            except EmptyAfterNormalization as e:
                logger.warning(str(e))
                continue
            phrases.append((canonical, phrase.frequency))
        ranked = rank_constituents(phrases, config.constituent_top_k)
        write_jsonl(
            config.output_dir / 'constituents.jsonl',
            ({'phrase': p, 'freq': f} for p, f in ranked),
        )
    print(f"nodes={kb.counts['nodes']} edges={kb.counts['edges']} concepts={kb.counts['concepts']}")
    return kb.counts


def cmd_bn_learn(
    annotations: Path,
    detections: Path,
    config: RunConfig,
    plot: bool = False,
) -> BayesNet:
    resources = config.load_resources()
    records = load_annotations(annotations)
    scenes = {d.image_id: d for d in load_detections(detections)}
    dataset = build_bn_dataset(
        records, scenes, resources.scene_meta, resources.taxonomy,
        resources.avc_rules, config.max_variables,
    )
    logger.info(f"BN dataset: {len(dataset)} tuples over {len(dataset.variables)} variables")
    dag = learn_structure(dataset, config.tabu)
    bn = fit_cpts(dag, dataset, config.smoothing_alpha)

    config.output_dir.mkdir(parents=True, exist_ok=True)
    dataset.frame.to_csv(config.output_dir / 'bn_dataset.csv', index_label='image_id')
    save_bn(config.output_dir / 'bn.json', bn)
    if plot:
        SdgVisualizer.create_score_plot(dag.graph['trajectory'], config.output_dir / 'bic.png')
    return bn


def _infer_one(reasoner: Reasoner, detections: DetectionSet) -> Dict[str, Any]:
    try:
        return reasoner.process(detections).to_dict()
    except SdgError as e:
        logger.error(f"Image {detections.image_id} failed: {e}")
        return {'image_id': detections.image_id, 'error': str(e)}
    except Exception as e:
        logger.error(f"Unexpected failure on image {detections.image_id}: {e}", exc_info=True)
        return {'image_id': detections.image_id, 'error': f"{type(e).__name__}: {e}"}


def run_inference(
    reasoner: Reasoner, detections: Sequence[DetectionSet], workers: int, sink: OrderedSink
) -> List[Dict[str, Any]]:
    """Process images on a bounded pool; the sink keeps input order."""
    results: List[Optional[Dict[str, Any]]] = [None] * len(detections)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_infer_one, reasoner, d): i for i, d in enumerate(detections)}
        for future in as_completed(futures):
            position = futures[future]
            results[position] = future.result()
            sink.put(position, results[position])
    sink.close()
    return results


def cmd_infer(
    detections: Path,
    kb_path: Path,
    bn_path: Path,
    config: RunConfig,
    dot: bool = False,
) -> Dict[str, int]:
    resources = config.load_resources()
    kb = load_kb(kb_path, resources.edge_vocabulary)
    bn = load_bn(bn_path)
    images = load_detections(detections)
    reasoner = Reasoner(
        kb, bn, resources.object_meta, resources.scene_meta,
        resources.compat_rules, resources.lexicon, config.reasoner,
    )

    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    with (out / 'results.jsonl').open('w', encoding='utf-8') as handle:
        results = run_inference(reasoner, images, config.workers, OrderedSink(handle))

    ok = [r for r in results if 'error' not in r]
    write_jsonl(out / 'sentences.jsonl', ({'image_id': r['image_id'], 'sentences': r['sentences']} for r in ok))
    (out / 'sentences.txt').write_text(
        ''.join(f"# {r['image_id']}\n{to_text(r['sentences'])}" for r in ok), encoding='utf-8'
    )
    if dot:
        write_dot_files(ok, out / 'dot')
    summary = {'images': len(results), 'failed': len(results) - len(ok)}
    logger.info(f"Inference finished: {summary}")
    return summary


def write_dot_files(results: Sequence[Mapping[str, Any]], directory: Path) -> List[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for record in results:
        path = directory / f"{record['image_id']}.dot"
        path.write_text(to_dot(sdg_from_result(record), record['image_id']), encoding='utf-8')
        written.append(path)
    return written


def cmd_export_dot(source: Path, config: RunConfig) -> List[Path]:
    """DOT files for every image in a results file, or one file for a KB."""
    out = config.output_dir / 'dot'
    if Path(source).suffix == '.jsonl':
        return write_dot_files([r for r in iter_jsonl(source) if 'error' not in r], out)
    kb = load_kb(source, config.edge_vocabulary)
    out.mkdir(parents=True, exist_ok=True)
    path = out / 'kb.dot'
    path.write_text(to_dot(kb.graph, 'kb'), encoding='utf-8')
    return [path]


def index_from_results(results: Path, taxonomy: Taxonomy) -> RetrievalIndex:
    return RetrievalIndex(
        ((r['image_id'], sdg_from_result(r)) for r in iter_jsonl(results) if 'error' not in r),
        taxonomy,
    )


def failed_images(results: Path) -> List[str]:
    return [str(r['image_id']) for r in iter_jsonl(results) if 'error' in r]


def cmd_retrieve(
    results: Path,
    queries: Path,
    config: RunConfig,
    plot: bool = False,
) -> RankingReport:
    resources = config.load_resources()
    index = index_from_results(results, resources.taxonomy)
    save_index(config.output_dir / 'index.json', index)
    query_records = list(iter_jsonl(queries))
    if not query_records:
        logger.warning(f"No queries in {queries}; writing an empty report")

    failed = set(failed_images(results))
    missing = [
        q.get('image_id') for q in query_records
        if q.get('image_id') not in index and q.get('image_id') not in failed
    ]
    if missing:
        raise MissingGold(str(m) for m in missing)
    last = len(index) + 1
    unranked = sorted({str(q['image_id']) for q in query_records if q['image_id'] in failed})
    if unranked:
        logger.warning(f"Inference failed for {unranked}; their queries count as misses at rank {last}")

    def rank_of(record: Mapping[str, Any]) -> Tuple[str, int]:
        query_id = str(record.get('query_id', record['image_id']))
        if record['image_id'] in failed:
            return query_id, last
        graph = query_graph_from_record(record, resources.lexicon, resources.taxonomy)
        ranking = rank_images(index, graph)
        return query_id, ranking.index(record['image_id']) + 1

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        ranks = dict(pool.map(rank_of, query_records))
    report = compute_metrics(ranks)
    save_json(config.output_dir / 'retrieval.json', report.to_dict())
    (config.output_dir / 'retrieval.txt').write_text(report.to_table() + "\n", encoding='utf-8')
    print(report.to_table())
    if plot and query_records:
        SdgVisualizer.create_recall_plot(report.recall_at, config.output_dir / 'recall.png')
    return report


def predictions_from_results(results: Path) -> Dict[str, Tuple[List[str], List[str]]]:
    """Entity and event labels of each image's SDG."""
    predicted = {}
    for record in iter_jsonl(results):
        if 'error' in record:
            continue
        sdg = sdg_from_result(record)
        predicted[record['image_id']] = (
            [n.label for n in sdg.nodes(NodeKind.ENTITY)],
            [n.label for n in sdg.nodes(NodeKind.EVENT)],
        )
    return predicted


def cmd_eval(results: Path, gold: Path, config: RunConfig) -> EvalReport:
    report = eval_entities_events(predictions_from_results(results), load_gold(gold))
    save_json(config.output_dir / 'eval.json', report.to_dict())
    (config.output_dir / 'eval.txt').write_text(report.to_table() + "\n", encoding='utf-8')
    print(report.to_table())
    return report
