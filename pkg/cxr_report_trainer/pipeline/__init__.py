from cxr_report_trainer.pipeline.runner import run_pipeline, run_seeds
from cxr_report_trainer.pipeline.synth import SyntheticSpec, synth_corpus

__all__ = ["SyntheticSpec", "run_pipeline", "run_seeds", "synth_corpus"]
