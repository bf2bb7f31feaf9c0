"""Code voting with additively shared return codes and a homomorphic tally."""

from .codespace import CodeElement, CodeSpace, Permutation, PlainToCode
from .election import ElectionConfig, Question, Voter
from .errors import AbortError, ParseError, Rejection

__all__ = [
    "AbortError", "CodeElement", "CodeSpace", "ElectionConfig", "ParseError", "Permutation", "PlainToCode",
    "Question", "Rejection", "Voter",
]
__version__ = "0.1.0"
