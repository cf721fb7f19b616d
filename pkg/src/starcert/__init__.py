"""Statistical tests over an encrypted holdout, certified on an auditable log."""

__version__ = "0.1.0"
