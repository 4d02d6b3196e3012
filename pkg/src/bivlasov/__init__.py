"""Relativistic Vlasov--Born-Infeld simulator in one space and two momentum dimensions."""

from __future__ import annotations

__version__ = "0.1.0"
