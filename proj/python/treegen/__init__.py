"""Grammar-rule-based neural code generation.

Thin re-export of the compiled module: grammar handling, the synthetic
task generator, metrics, gradient checking, and the train / generate /
evaluate pipeline.
"""

from ._treegen import (
    CheckpointError,
    ConfigError,
    CorpusError,
    Grammar,
    GrammarError,
    TrainedModel,
    bleu,
    default_config,
    gradcheck_micro,
    str_acc,
    synth_task,
    train,
    write_synth_task,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "CorpusError",
    "Grammar",
    "GrammarError",
    "TrainedModel",
    "bleu",
    "default_config",
    "gradcheck_micro",
    "str_acc",
    "synth_task",
    "train",
    "write_synth_task",
]
