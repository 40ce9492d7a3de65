"""Exception hierarchy shared across the pipeline."""


class QuimError(Exception):
    """Base class for all errors raised by this package."""


# --- corpus ingestion ---------------------------------------------------

class MalformedUrl(QuimError):
    pass


class EmptyDocument(QuimError):
    pass


class FormatError(QuimError):
    """A corpus/questions file line could not be parsed."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


# --- providers ----------------------------------------------------------

class ProviderError(QuimError):
    """Transport failure or refusal from an external model provider."""


class EmptyGeneration(QuimError):
    """Provider returned zero usable items."""


class TemplateError(QuimError):
    pass


class EmptyText(QuimError):
    pass


# --- vectors / quantizer ------------------------------------------------

class DimMismatch(QuimError):
    pass


class TooFewVectors(QuimError):
    pass


# --- index --------------------------------------------------------------

class ReferentialIntegrity(QuimError):
    """A record references an id that does not exist."""


class UnknownPrototype(QuimError):
    pass


class VersionMismatch(QuimError):
    pass


class ChecksumError(QuimError):
    pass


# --- retrieval / generation ---------------------------------------------

class EmbedderMismatch(QuimError):
    """Query embedder differs from the one the index was built with."""


class EmptyIndex(QuimError):
    pass


class ContextOverflow(QuimError):
    """A single context chunk alone exceeds the provider context limit."""


# --- evaluation ---------------------------------------------------------

class EmptySequence(QuimError):
    pass


class NoClaims(QuimError):
    pass


class EmptyContext(QuimError):
    pass


class JudgeHallucination(QuimError):
    """Judge extracted a sentence that is not part of the context."""


class EmptyRetrieval(QuimError):
    pass
