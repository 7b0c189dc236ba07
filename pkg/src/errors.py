"""
errors.py — Exception hierarchy shared by every pbmix module.

All errors derive from PbmixError so the CLI can map them to exit codes in
one place; each one also subclasses the builtin category it belongs to
(ValueError for bad input, RuntimeError for numerical breakdown).
"""

from __future__ import annotations

from typing import Optional


class PbmixError(Exception):
    """Base class for all pbmix failures."""


# ── Mesh ──────────────────────────────────────────────────────────────────────

class ParseError(PbmixError, ValueError):
    """Malformed mesh file. Carries the 1-based line number."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class InvariantViolation(PbmixError, ValueError):
    """A mesh invariant (orientation, conformity, markers) fails."""


class MissingMarker(InvariantViolation):
    """A boundary facet has no Dirichlet/Neumann marker."""


class MissingInteriorNeighbour(PbmixError, ValueError):
    """A Neumann vertex shares no cell with an interior vertex."""


class MeshMismatch(PbmixError, ValueError):
    """Coarse mesh is not an ancestor of the reference mesh."""


# ── Finite element core ───────────────────────────────────────────────────────

class DegenerateCell(PbmixError, ValueError):
    """Cell with non-positive area."""


class SingularGram(PbmixError, RuntimeError):
    """Local bubble Gram matrix is numerically singular."""


class UnsupportedDegree(PbmixError, ValueError):
    """Polynomial degree not available for this operation."""


# ── Loads ─────────────────────────────────────────────────────────────────────

class PointOnDirichletBoundary(PbmixError, ValueError):
    """Point Dirac placed on Γ_D, where H¹_D test functions vanish."""


class MarkerMismatch(PbmixError, ValueError):
    """Boundary moment requested on a facet with the other marker."""


# ── Regulariser ───────────────────────────────────────────────────────────────

class CollinearCentroids(PbmixError, ValueError):
    """Patch centroids cannot reproduce the vertex position."""


# ── System / postprocess ──────────────────────────────────────────────────────

class CoefficientBoundViolation(PbmixError, ValueError):
    """ε or κ leaves its admissible range at a quadrature point."""


class SingularSystem(PbmixError, RuntimeError):
    """Sparse factorisation broke down or missed the residual contract."""


class LocalSingular(PbmixError, RuntimeError):
    """Element-local postprocess system is singular."""


# ── Analysis / CLI ────────────────────────────────────────────────────────────

class UnknownCase(PbmixError, ValueError):
    """Requested manufactured case is not in the catalogue."""


class UndefinedNorm(PbmixError, ValueError):
    """Norm is not defined for the regularity of the exact solution."""


class InconsistentCase(PbmixError, RuntimeError):
    """Closed-form manufactured data disagree with a finite-difference check."""


class ConfigError(PbmixError, ValueError):
    """Invalid run configuration (CLI exit code 2)."""
