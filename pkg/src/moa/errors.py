"""Exception hierarchy shared by every moa module.

Each class carries a ``code`` token; the same token appears on the wire
(fault envelopes, registry error bodies) and in CLI diagnostics.
"""


class MoaError(Exception):
    code = "Error"

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message

    def __str__(self):
        return f"{self.code}: {self.message}" if self.message else self.code


# document level

class MalformedXml(MoaError):
    code = "MalformedXml"


class SchemaViolation(MoaError):
    code = "SchemaViolation"


class DanglingReference(MoaError):
    code = "DanglingReference"


class DuplicateName(MoaError):
    code = "DuplicateName"


class ValidationFailed(MoaError):
    code = "ValidationFailed"

    def __init__(self, report):
        super().__init__("; ".join(str(v) for v in report.violations))
        self.report = report


# descriptor level

class DomainViolation(MoaError):
    code = "DomainViolation"


class SignatureMismatch(MoaError):
    code = "SignatureMismatch"


class EmptyIntention(MoaError):
    code = "EmptyIntention"


class MissingTarget(MoaError):
    code = "MissingTarget"


class MetamodelMismatch(MoaError):
    code = "MetamodelMismatch"


# registry

class InvalidDescriptor(MoaError):
    code = "InvalidDescriptor"


class DuplicateService(MoaError):
    code = "DuplicateService"


class StorageFailure(MoaError):
    code = "StorageFailure"


class NotFound(MoaError):
    code = "NotFound"


class EmptyQuery(MoaError):
    code = "EmptyQuery"


class CorruptJournal(MoaError):
    code = "CorruptJournal"

    def __init__(self, line_no: int, message: str = ""):
        super().__init__(f"line {line_no}: {message}" if message else f"line {line_no}")
        self.line_no = line_no


class TransportError(MoaError):
    code = "TransportError"


# transformations (mapped to PreconditionFailed faults)

class PreconditionError(MoaError):
    code = "PreconditionFailed"


class AssociationNotFound(PreconditionError):
    code = "AssociationNotFound"


class ClassNotFound(PreconditionError):
    code = "ClassNotFound"


class NameCollision(PreconditionError):
    code = "NameCollision"


class SelfAssociationUnsupported(PreconditionError):
    code = "SelfAssociationUnsupported"


class UnknownOperation(MoaError):
    code = "UnknownOperation"


class UnknownImplementation(MoaError):
    code = "UnknownImplementation"


# composition

class EmptyProcess(MoaError):
    code = "EmptyProcess"


class InvocationFailure(MoaError):
    code = "InvocationFailure"

    def __init__(self, step_path: str, cause):
        super().__init__(f"step {step_path}: {cause}")
        self.step_path = step_path
        self.cause = cause


class ServiceFault(InvocationFailure):
    """The remote host answered with a fault envelope."""

    code = "ServiceFault"

    def __init__(self, step_path: str, fault_code: str, fault_message: str, stage: str | None = None):
        super().__init__(step_path, f"{fault_code}: {fault_message}")
        self.fault_code = fault_code
        self.fault_message = fault_message
        self.stage = stage


class MergeConflict(MoaError):
    code = "MergeConflict"

    def __init__(self, identifiers):
        self.identifiers = sorted(set(identifiers))
        super().__init__("overlapping changes on " + ", ".join(self.identifiers))
