"""Exception types shared across the toolkit."""


class MgtdError(Exception):
    """Base class for toolkit errors."""


class CorpusError(MgtdError, ValueError):
    pass


class ParseError(CorpusError):
    def __init__(self, path, line_number, message):
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = path
        self.line_number = line_number


class ValidationError(CorpusError):
    pass


class TranslationError(MgtdError, RuntimeError):
    def __init__(self, doc_id, message):
        super().__init__(f"translation failed for document {doc_id!r}: {message}")
        self.doc_id = doc_id


class TrainingError(MgtdError, RuntimeError):
    pass


class ConfigError(MgtdError, ValueError):
    pass
