"""Exception hierarchy shared across the toolkit."""


class EmoCtcError(Exception):
    """Base class for all toolkit errors."""


# --- corpus / manifest ---

class EmptyCorpus(EmoCtcError):
    pass


class ParseError(EmoCtcError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class MissingAudio(EmoCtcError):
    pass


class BadSampleRate(EmoCtcError):
    pass


class BadConfig(EmoCtcError):
    pass


class LayoutNotRecognized(EmoCtcError):
    pass


class PartialImport(EmoCtcError):
    """Import finished but some items were skipped; carries the skip list."""

    def __init__(self, message, skipped):
        super().__init__(message)
        self.skipped = skipped


# --- features ---

class EmptySignal(EmoCtcError):
    pass


class NonFiniteFeature(EmoCtcError):
    pass


# --- ctc ---

class LengthMismatch(EmoCtcError):
    pass


class TooLargeToEnumerate(EmoCtcError):
    pass


class InfeasibleLabeling(EmoCtcError):
    pass


class BadWidth(EmoCtcError):
    pass


# --- nn / training ---

class ShapeMismatch(EmoCtcError):
    pass


class NonFiniteGradient(EmoCtcError):
    pass


class Diverged(EmoCtcError):
    pass


# --- baselines / eval ---

class EmptyTraining(EmoCtcError):
    pass


class Empty(EmoCtcError):
    pass


class TooFewGroups(EmoCtcError):
    pass


class MissingExpertData(EmoCtcError):
    pass


# --- annotation service ---

class UnknownSession(EmoCtcError):
    pass


class NotServed(EmoCtcError):
    pass


class DuplicateAnswer(EmoCtcError):
    pass


class NoData(EmoCtcError):
    pass
