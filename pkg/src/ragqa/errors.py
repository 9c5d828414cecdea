"""Exception hierarchy shared by every ragqa module.

CLI exit codes are attached to the three top-level families so that the
command-line harness can map failures without inspecting messages.
"""


class RagQAError(Exception):
    exit_code = 1


class ConfigError(RagQAError):
    """Invalid configuration, chunking spec, or unknown template."""

    exit_code = 1


class InvalidSpec(ConfigError):
    pass


class UnknownTemplate(ConfigError):
    pass


class InvalidInput(RagQAError, ValueError):
    """A caller passed data violating an operation's precondition."""

    exit_code = 2


class DegenerateVector(InvalidInput):
    pass


class DataError(RagQAError):
    exit_code = 2


class FileMissing(DataError, FileNotFoundError):
    pass


class ParseFailure(DataError):
    pass


class IntegrityError(DataError):
    def __init__(self, message, dangling_qids=()):
        super().__init__(message)
        self.dangling_qids = list(dangling_qids)


class ServiceError(RagQAError):
    """Transport or protocol failure talking to an external service."""

    exit_code = 3

    def __init__(self, message, status=None, body_excerpt=""):
        super().__init__(message)
        self.status = status
        self.body_excerpt = body_excerpt


class EmbedServiceError(ServiceError):
    pass


class GenerationServiceError(ServiceError):
    pass


class StageError(RagQAError):
    """Failure inside one pipeline stage; ``stage`` names which."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


class UnknownQid(DataError):
    pass
