"""AlertForge: synthesize and evaluate per-target NIDS alerts with WGAN-GP / WGAN-GPMI."""

__version__ = "0.1.0"
