"""Structured pruning for a toy multimodal decoder transformer.

The heavy lifting lives in the ``_mucrasp`` extension module; this package
re-exports its public surface. Installed builds place the extension inside
the package; development builds may leave it on ``sys.path`` directly.
"""

try:
    from ._mucrasp import *  # noqa: F401,F403
    from ._mucrasp import __doc__ as _ext_doc  # noqa: F401
except ImportError:  # extension on sys.path (build-tree layout)
    from _mucrasp import *  # noqa: F401,F403

__all__ = [
    "ModelConfig",
    "Corpus",
    "Model",
    "Plan",
    "MucraspError",
    "toy_config",
    "generate_corpus",
    "load_corpus",
    "init_model",
    "load_model",
    "train",
    "tokenize",
    "detokenize",
    "detect_pivots",
    "enumerate_units",
    "build_plan",
    "apply_prune",
    "perplexity",
    "mean_kl",
]
