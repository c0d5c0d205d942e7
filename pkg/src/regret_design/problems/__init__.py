"""Concrete example problems: quadratic, pricing, and pandemic control."""

from . import pandemic, pricing, quadratic

__all__ = ["pandemic", "pricing", "quadratic"]
