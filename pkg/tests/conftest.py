import pytest

from cxr_report_trainer.corpus.annotations import parse_annotations
from cxr_report_trainer.core.config import PipelineConfig
from cxr_report_trainer.fusion.projection_model import ProjectionParams
from cxr_report_trainer.pipeline.synth import SyntheticSpec, synth_corpus

# Eight sentences, four valid subsets: mediastinum, both lungs, both clavicles, abdomen.
SAMPLE_SENTENCES = [
    ("The mediastinum is mildly enlarged.", ["mediastinum"]),
    ("Blunting of right costophrenic angle noted.", ["right lung"]),
    ("No suspicious nodules seen.", ["right lung", "left lung"]),
    ("No pneumothorax or infective consolidation.", ["right lung", "left lung"]),
    ("Bilateral atelectasis, likely post-operative.", ["right lung", "left lung"]),
    ("Degenerative changes seen in both shoulders.", ["left clavicle", "right clavicle"]),
    ("NG tube tip positioned correctly in stomach.", ["abdomen"]),
    ("No free air under diaphragm.", ["abdomen"]),
]

SMALL_SPEC = dict(patient_count=12, token_dim=8)


def annotation_records(report_id, sentences):
    return [
        {"report_id": report_id, "sentence_index": i, "text": text, "regions": regions}
        for i, (text, regions) in enumerate(sentences)
    ]


@pytest.fixture
def sample_report():
    return parse_annotations(
        annotation_records("r-sample", SAMPLE_SENTENCES), indication_text="Cough."
    )


@pytest.fixture
def toy_params():
    return ProjectionParams.random(2, seed=7)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """(corpus_dir, sidecar) of a dozen synthetic patients with 8-wide tokens."""
    corpus_dir = str(tmp_path_factory.mktemp("corpus"))
    sidecar = synth_corpus(SyntheticSpec(**SMALL_SPEC), seed=3, out_dir=corpus_dir)
    return corpus_dir, sidecar


@pytest.fixture
def small_config(small_corpus, tmp_path):
    corpus_dir, _ = small_corpus
    return PipelineConfig(
        corpus_dir=corpus_dir,
        output_dir=str(tmp_path / "run"),
        token_dim=8,
        embedding_width=8,
    )
