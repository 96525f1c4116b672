"""Exception hierarchy shared by every stage of the pipeline."""


class ArsicError(Exception):
    """Base class for all errors raised by this package."""


# ingest


class IngestError(ArsicError):
    pass


class NonFiniteCoordinate(IngestError, ValueError):
    pass


class MalformedLine(IngestError):
    def __init__(self, line_no, detail=""):
        self.line_no = line_no
        msg = f"malformed annotation line {line_no}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class EmptyAnnotation(IngestError):
    pass


class NotFeatureCollection(IngestError):
    pass


class MalformedBounds(IngestError):
    def __init__(self, index, detail=""):
        self.index = index
        msg = f"malformed bounds_imcoords in feature {index}"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class SchemaViolation(IngestError):
    def __init__(self, path, detail=""):
        self.path = path
        super().__init__(f"{path}: {detail}" if detail else path)


# spatial


class SpatialError(ArsicError):
    pass


class EmptyGroup(SpatialError, ValueError):
    pass


class DisconnectedGraph(SpatialError):
    pass


class EmptySample(SpatialError, ValueError):
    pass


# patterns


class TooFewMembers(ArsicError, ValueError):
    pass


class InconsistentClustering(ArsicError):
    pass


# llm_io


class LlmError(ArsicError):
    pass


class LlmTransportError(LlmError):
    def __init__(self, detail, attempts=0):
        self.detail = detail
        self.attempts = attempts
        super().__init__(f"transport failure after {attempts} attempt(s): {detail}")


class HttpStatusError(LlmError):
    def __init__(self, code, body=""):
        self.code = code
        super().__init__(f"HTTP {code}: {body[:200]}" if body else f"HTTP {code}")


class MalformedResponse(LlmError):
    pass


class CaptionParseError(ArsicError):
    pass


class NoListFound(CaptionParseError):
    pass


class UnterminatedString(CaptionParseError):
    def __init__(self, offset):
        self.offset = offset
        super().__init__(f"unterminated string literal starting at offset {offset}")


class NonStringElement(CaptionParseError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"list element {index} is not a string literal")


class EmptyList(CaptionParseError):
    pass


# select


class ScorerUnavailable(ArsicError):
    pass


class EmbeddingDimensionMismatch(ArsicError):
    pass


class AllFiltered(ArsicError):
    pass


# metrics


class EmptyCorpus(ArsicError, ValueError):
    pass


class NoReferences(ArsicError, ValueError):
    pass


# cli / pipeline


class ConfigError(ArsicError):
    pass


class EmptyDataset(ArsicError):
    pass


class NoOverlap(ArsicError):
    pass
