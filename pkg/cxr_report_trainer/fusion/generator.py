import logging
from typing import Callable, Dict, List, Protocol, runtime_checkable

from cxr_report_trainer.core.errors import GeneratorFailure, PipelineError
from cxr_report_trainer.fusion.multimodal_input import MultimodalSequence


@runtime_checkable
class ReportGenerator(Protocol):
    def generate(self, sequence: MultimodalSequence) -> str: ...


class TemplateGenerator:
    """
    Reference generator for pipeline and metric tests, not a language model.
    Emits one canned normal-finding sentence per unmasked region, in
    vocabulary order; a "left X"/"right X" pair that is unmasked together
    becomes a single sentence.
    """

    def generate(self, sequence: MultimodalSequence) -> str:
        unmasked = list(sequence.unmasked_regions)
        remaining = set(unmasked)
        sentences: List[str] = []
        for region in unmasked:
            if region not in remaining:
                continue
            remaining.discard(region)
            partner = _bilateral_partner(region)
            if partner is not None and partner in remaining:
                remaining.discard(partner)
                sentences.append(f"The left and right {region.split(' ', 1)[1]} are unremarkable.")
            else:
                sentences.append(f"The {region} is unremarkable.")
        return " ".join(sentences)


def _bilateral_partner(region: str):
    side, _, rest = region.partition(" ")
    if not rest:
        return None
    if side == "left":
        return f"right {rest}"
    if side == "right":
        return f"left {rest}"
    return None


GENERATORS: Dict[str, Callable[[], ReportGenerator]] = {"template": TemplateGenerator}


def register_generator(name: str, factory: Callable[[], ReportGenerator]) -> None:
    GENERATORS[name] = factory


def get_generator(name: str) -> ReportGenerator:
    try:
        return GENERATORS[name]()
    except KeyError:
        raise GeneratorFailure(
            f"No generator registered as '{name}'. Known: {', '.join(sorted(GENERATORS))}"
        )


def generate_report(sequence: MultimodalSequence, generator: ReportGenerator) -> str:
    try:
        text = generator.generate(sequence)
    except PipelineError:
        raise
    except Exception as e:
        logging.error(f"Generator {type(generator).__name__} failed: {e}")
        raise GeneratorFailure(f"{type(generator).__name__} failed: {e}") from e
    if not isinstance(text, str):
        raise GeneratorFailure(
            f"{type(generator).__name__} returned {type(text).__name__}, expected str."
        )
    return text
