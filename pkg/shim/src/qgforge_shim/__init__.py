"""Model shim: real generation and QA models behind the pipeline wire protocol."""

__version__ = "0.1.0"
