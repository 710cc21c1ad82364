"""Typed errors raised across the pipeline.

Everything derives from :class:`PipelineError` so the CLI can map any data
problem to exit code 2 with a single except clause.  Names are part of the
interface: the CLI prints the class name on the error stream.
"""


class PipelineError(Exception):
    """Base class for all data/domain errors in this package."""


# --- image / patch grid ---------------------------------------------------

class EmptyImage(PipelineError):
    """Image has a zero dimension."""


class NonDivisibleDimensions(PipelineError):
    """Image or patch dimensions do not tile evenly."""


class MalformedHeader(PipelineError):
    """PGM header could not be parsed or is unsupported."""


# --- attention ------------------------------------------------------------

class BadMagic(PipelineError):
    """Binary payload does not start with the expected magic bytes."""


class UnsupportedVersion(PipelineError):
    """Binary payload declares a format version this build cannot read."""


class TruncatedPayload(PipelineError):
    """Binary payload is shorter (or longer) than its header declares."""


class NegativeWeight(PipelineError):
    """Attention matrix contains a negative or non-finite weight."""


class RowNotNormalized(PipelineError):
    """An attention row does not sum to 1 within tolerance."""


class InvalidConcentration(PipelineError):
    """Synthetic attention concentration must be positive."""


# --- pruning --------------------------------------------------------------

class InvalidFraction(PipelineError):
    """Top-k fraction outside (0, 1]."""


# --- graphs ---------------------------------------------------------------

class EmptyPrunedSet(PipelineError):
    """Cannot build a visual graph from zero retained patches."""


class MalformedDocument(PipelineError):
    """Knowledge-graph document is not valid against the schema."""


class DanglingRelation(PipelineError):
    """A relation references an entity id that does not exist."""


class DuplicateEntityId(PipelineError):
    """Two entities share the same id."""


class EmptyGraph(PipelineError):
    """Knowledge-graph document contains no entities."""


class EmptyModality(PipelineError):
    """Fusion requires both graphs to be non-empty."""


# --- serialization --------------------------------------------------------

class Truncated(PipelineError):
    """Encoded graph payload length does not match its header."""


class EdgeOutOfRange(PipelineError):
    """Edge or bridge endpoint references a node id >= node count."""


class BridgeMissing(PipelineError):
    """Declared bridge does not match a VISUAL-TEXT edge in the payload."""


class MalformedPayload(PipelineError):
    """Payload violates canonical form (modality bytes, edge ordering...)."""


# --- mpnn -----------------------------------------------------------------

class DimensionMismatch(PipelineError):
    """Graph feature dimension incompatible with the model."""


class EmptyDataset(PipelineError):
    """Training requires at least one example."""


# --- metrics / fixtures ---------------------------------------------------

class DegenerateLabels(PipelineError):
    """AUC needs at least one positive and one negative label."""


class EmptyCandidate(PipelineError):
    """BLEU candidate sequence is empty."""


class InvalidRate(PipelineError):
    """Positive rate outside (0, 1)."""
