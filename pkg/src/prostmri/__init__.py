"""Classical prostate-MRI classification pipelines and clinical evaluation tools."""

__version__ = "0.1.0"
