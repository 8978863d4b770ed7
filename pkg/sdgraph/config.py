"""Configuration settings for the scene description graph engine."""
from pathlib import Path
from typing import Final
import os

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Paths
PACKAGE_DIR: Final[Path] = Path(__file__).resolve().parent
DATA_DIR: Final[Path] = Path(os.getenv('SDG_DATA_DIR') or PACKAGE_DIR / 'data')
DEFAULT_CONFIG_PATH: Final[Path | None] = (
    Path(os.environ['SDG_CONFIG']) if os.getenv('SDG_CONFIG') else None
)
DEFAULT_OUTPUT_DIR: Final[Path] = Path('out')

DEFAULT_RESOURCE_FILES: Final[dict[str, str]] = {
    'taxonomy': 'taxonomy.json',
    'object_meta': 'object_meta.json',
    'scene_meta': 'scene_meta.json',
    'stopwords': 'stopwords.txt',
    'compat_rules': 'compat_rules.json',
    'avc_rules': 'avc_rules.json',
    'lexicon': 'lexicon.json',
}

# Logging
LOG_LEVEL: Final[str] = os.getenv('SDG_LOG', 'INFO').upper()
LOG_FORMAT: Final[str] = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Graph model
EDGE_VOCABULARY: Final[frozenset[str]] = frozenset({
    'agent', 'recipient', 'location', 'component', 'trait',
    'instrument', 'destination', 'origin', 'caused_by', 'related_to',
})
MAX_CONNECTING_CHAINS: Final[int] = 5
MAX_CHAIN_EVENTS: Final[int] = 2

# Detections
TOP_SCENES: Final[int] = 5
TOP_CONSTITUENTS: Final[int] = 10
CONSTITUENT_RANK_LIMIT: Final[int] = 1000

# Reasoner defaults
ALPHA_HIGH: Final[float] = 0.5
ALPHA_LOW: Final[float] = 0.1
AVC_FREQ_THRESHOLD: Final[int] = 2
EPSILON_MISSING: Final[float] = 0.01

# Bayesian network learning
BN_MAX_VARIABLES: Final[int] = 60
CPT_SMOOTHING_ALPHA: Final[float] = 1.0
TABU_MAX_ITERATIONS: Final[int] = 500
TABU_LIST_LENGTH: Final[int] = 10
TABU_MAX_PARENTS: Final[int] = 3
TABU_RANDOM_RESTARTS: Final[int] = 0
TABU_RESTART_LENGTH: Final[int] = 5
RANDOM_SEED: Final[int] = 42
ENUMERATION_LIMIT: Final[int] = 20
SCORE_EPSILON: Final[float] = 1e-8

# Retrieval
RECALL_AT: Final[tuple[int, ...]] = (1, 5, 10)

# Batch execution
DEFAULT_WORKERS: Final[int] = 1

# Visualization Settings
FIGURE_SIZE: Final[tuple[float, float]] = (6.4, 4.8)  # Default matplotlib size
COLORS: Final[dict[str, str]] = {
    'score': 'blue',
    'recall': 'green',
    'grid': '#E0E0E0'
}

# Command line
COMMANDS: Final[dict[str, str]] = {
    'kb-build': 'Merge annotation graphs into the knowledge base',
    'bn-learn': 'Learn the entity/AVC Bayesian network from training images',
    'infer': 'Build scene description graphs and sentences for test images',
    'retrieve': 'Rank indexed images against query graphs',
    'eval': 'Score predicted entities and events against gold annotations',
    'export-dot': 'Write DOT files for results or a knowledge base',
}
