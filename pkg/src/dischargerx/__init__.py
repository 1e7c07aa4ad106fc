"""Predict discharge antihypertensive medications from admission-time
clinical note text.

Pipeline: parse semi-structured discharge notes into admission-time
sections and discharge-medication labels (`notes`), build vocabularies,
splits and features (`corpus`, `synth` for synthetic data), train a
convolutional network whose factor head exposes medication correlations
(`model`, on the `ndgrad` autodiff core), compare against logistic
regression and MLP baselines (`baselines`), score everything the same way
(`metrics`), and inspect what was learned (`analysis`).  The `cli` module
wires these into reproducible multi-seed runs.
"""

from .corpus import (
    DatasetSplit,
    EncodedExample,
    PreparedData,
    Vocabulary,
    build_vocabulary,
    prepare_datasets,
    split_dataset,
)
from .model import (
    CovarianceReport,
    ForwardTrace,
    ModelParams,
    TrainConfig,
    forward,
    init_params,
    load_checkpoint,
    medication_covariance,
    predict,
    predict_probs,
    save_checkpoint,
    train,
)
from .notes import (
    ADMISSION_SECTIONS,
    NUM_MEDICATIONS,
    MalformedNote,
    Medication,
    ParsedNote,
    RawNote,
    SectionType,
    parse_note,
)
from .synth import SyntheticSpec, generate_synthetic_corpus

__version__ = "0.1.0"

__all__ = [
    "ADMISSION_SECTIONS",
    "CovarianceReport",
    "DatasetSplit",
    "EncodedExample",
    "ForwardTrace",
    "MalformedNote",
    "Medication",
    "ModelParams",
    "NUM_MEDICATIONS",
    "ParsedNote",
    "PreparedData",
    "RawNote",
    "SectionType",
    "SyntheticSpec",
    "TrainConfig",
    "Vocabulary",
    "build_vocabulary",
    "forward",
    "generate_synthetic_corpus",
    "init_params",
    "load_checkpoint",
    "medication_covariance",
    "parse_note",
    "predict",
    "predict_probs",
    "prepare_datasets",
    "save_checkpoint",
    "split_dataset",
    "train",
    "__version__",
]
