from cxr_report_trainer.fusion.generator import (
    TemplateGenerator,
    generate_report,
    get_generator,
    register_generator,
)
from cxr_report_trainer.fusion.joint import JointRepresentation, build_joint_representation
from cxr_report_trainer.fusion.multimodal_input import (
    EmbeddingTables,
    MultimodalSequence,
    TextVocabulary,
    assemble_multimodal_input,
)
from cxr_report_trainer.fusion.projection_model import (
    LongitudinalProjection,
    ProjectionParams,
    load_params,
    mlp_forward,
    save_params,
)

__all__ = [
    "EmbeddingTables",
    "JointRepresentation",
    "LongitudinalProjection",
    "MultimodalSequence",
    "ProjectionParams",
    "TemplateGenerator",
    "TextVocabulary",
    "assemble_multimodal_input",
    "build_joint_representation",
    "generate_report",
    "get_generator",
    "load_params",
    "mlp_forward",
    "register_generator",
    "save_params",
]
