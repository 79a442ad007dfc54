import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional

from cxr_report_trainer.core.errors import ConfigError

PACKAGE_DIR = os.path.dirname(os.path.dirname(__file__))


class Config:
    def __init__(self):
        # Full-scale sizes
        self.FULL_SCALE_TOKEN_DIM = 1024
        self.FULL_SCALE_REGION_COUNT = 36
        self.FULL_SCALE_FINDING_COUNT = 71
        self.LABELER_FINDING_COUNT = 14

        # Vocabulary files shipped with the package
        self.VOCAB_DIR = os.path.join(PACKAGE_DIR, "corpus", "vocab")
        self.REGION_VOCAB_PATH = os.path.join(self.VOCAB_DIR, "regions.txt")
        self.FINDING_VOCAB_PATH = os.path.join(self.VOCAB_DIR, "findings.txt")
        self.LABELER_VOCAB_PATH = os.path.join(self.VOCAB_DIR, "labeler_findings.txt")

        # Section headers; HISTORY is an alias of INDICATION
        self.FINDINGS_HEADERS = ("FINDINGS",)
        self.INDICATION_HEADERS = ("INDICATION", "HISTORY")

        # METEOR-style parameters
        self.METEOR_ALPHA = 0.9
        self.METEOR_BETA = 3.0
        self.METEOR_GAMMA = 0.5

        # Run layout
        self.SETTINGS_PATH = "settings.json"
        self.OUTPUT_DIR_ENV = "CXR_OUTPUT_DIR"
        self.LOG_FILE_NAME = "pipeline.log"
        self.MANIFEST_NAME = "manifest.json"

        # Corpus directory layout
        self.REPORTS_FILE = "reports.jsonl"
        self.ANNOTATIONS_FILE = "annotations.jsonl"
        self.TOKENS_FILE = "tokens.jsonl"
        self.METADATA_FILE = "metadata.csv"
        self.SIDECAR_FILE = "sidecar.json"


config = Config()


@dataclass
class PipelineConfig:
    corpus_dir: str = os.path.join("data", "synthetic")
    output_dir: str = os.path.join("data", "runs", "latest")
    global_seed: int = 0
    region_vocab_path: str = config.REGION_VOCAB_PATH
    finding_vocab_path: str = config.FINDING_VOCAB_PATH
    labeler_vocab_path: str = config.LABELER_VOCAB_PATH
    findings_headers: List[str] = field(default_factory=lambda: list(config.FINDINGS_HEADERS))
    indication_headers: List[str] = field(default_factory=lambda: list(config.INDICATION_HEADERS))
    token_dim: int = 64
    embedding_width: int = 32
    max_positions: int = 128
    samples_per_report: int = 1
    full_report_probability: Optional[float] = None
    include_masked_regions: bool = True
    use_priors: bool = True
    ce_average: str = "micro"
    bleu_max_n: int = 4
    rouge_beta: float = 1.0
    length_bin_width: int = 10
    generator: str = "template"
    labeler: str = "rules"
    projection_params_path: Optional[str] = None
    synthetic: Dict[str, Any] = field(default_factory=dict)
    log_level: str = "INFO"
    workers: int = 1

    def validate(self) -> "PipelineConfig":
        if self.token_dim <= 0:
            raise ConfigError(f"token_dim must be positive, got {self.token_dim}.")
        if self.embedding_width <= 0:
            raise ConfigError(
                f"embedding_width must be positive, got {self.embedding_width}."
            )
        if self.samples_per_report < 1:
            raise ConfigError("samples_per_report must be at least 1.")
        if self.full_report_probability is not None and not (
            0.0 <= self.full_report_probability <= 1.0
        ):
            raise ConfigError("full_report_probability must lie in [0, 1].")
        if self.ce_average not in ("micro", "macro"):
            raise ConfigError(f"ce_average must be 'micro' or 'macro', got '{self.ce_average}'.")
        if not 1 <= self.bleu_max_n <= 4:
            raise ConfigError("bleu_max_n must be between 1 and 4.")
        if not self.findings_headers or not all(
            isinstance(h, str) and h.strip() for h in self.findings_headers
        ):
            raise ConfigError("findings_headers must list at least one non-empty header.")
        if not all(isinstance(h, str) and h.strip() for h in self.indication_headers):
            raise ConfigError("indication_headers must not contain empty headers.")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1.")
        return self

    def require_paths(self, *names: str) -> None:
        """Raise ConfigError for any named path attribute that does not exist."""
        for name in names:
            path = getattr(self, name)
            if path is None or not os.path.exists(path):
                raise ConfigError(f"Configured {name} '{path}' does not exist.")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def field_names(cls):
        return {f.name for f in fields(cls)}
