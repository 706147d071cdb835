class DiwrError(Exception):
    """Base class for every error raised by diwr"""


class ParseError(DiwrError, ValueError):
    """A point or mesh file could not be parsed

    Parameters
    ----------
    message: str
        Description of the problem.
    path: str, optional
        File being parsed.
    line: int, optional
        One-based line number of the offending record.
    offset: int, optional
        Byte offset (binary files) or zero-based column (text files).
    """
    def __init__(self, message, path=None, line=None, offset=None):
        location = []
        if path is not None:
            location.append(str(path))
        if line is not None:
            location.append('line %d' % line)
        if offset is not None:
            location.append('offset %d' % offset)

        if location:
            message = '%s (%s)' % (message, ', '.join(location))

        super().__init__(message)
        self.path = path
        self.line = line
        self.offset = offset


class TooFewPoints(DiwrError, ValueError):
    pass


class DegenerateExtent(DiwrError, ValueError):
    pass


class DegenerateNeighborhood(DiwrError, ValueError):
    pass


class SingularQuery(DiwrError, ValueError):
    pass


class StaleTree(DiwrError):
    pass


class EmptyHighConfidenceSet(DiwrError, ValueError):
    pass


class EmptyMask(DiwrError, ValueError):
    pass


class EmptyResult(DiwrError):
    pass


class EmptyLevelSet(DiwrError):
    pass


class EmptyInput(DiwrError, ValueError):
    pass


class NoInsideOracle(DiwrError, ValueError):
    pass


class ConfigError(DiwrError, ValueError):
    pass


class NonFiniteEnergy(DiwrError, ArithmeticError):
    """An energy or gradient became NaN or infinite during optimization

    Parameters
    ----------
    message: str
        Description of where the non-finite value showed up.
    log: pd.DataFrame, optional
        Per-iteration records collected up to the failure.
    """
    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log
