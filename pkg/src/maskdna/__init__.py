"""Masked discrete diffusion language modelling for DNA at desk scale."""

__version__ = "0.1.0"
