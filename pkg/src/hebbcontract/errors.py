"""Exception hierarchy.

Every error raised by the package derives from ``HebbContractError`` so the CLI
can map the whole family onto exit code 2.
"""


class HebbContractError(Exception):
    pass


# topology
class TopologyError(HebbContractError, ValueError):
    pass


class IndexOutOfRange(TopologyError):
    pass


class DuplicateEdge(TopologyError):
    pass


class ZeroCoefficient(TopologyError):
    pass


class DimensionMismatch(HebbContractError, ValueError):
    pass


# analysis
class NonSquare(HebbContractError, ValueError):
    pass


class NonSquareDiagonalBlock(NonSquare):
    pass


class InvalidParams(HebbContractError, ValueError):
    pass


class NotMetzler(HebbContractError, ValueError):
    pass


class ReducibleWithZeroDelta(HebbContractError, ValueError):
    pass


class NonPositiveWeight(HebbContractError, ValueError):
    pass


class UnsupportedExponent(HebbContractError, ValueError):
    pass


class ConvergenceError(HebbContractError, RuntimeError):
    pass


# simulation
class UnstableStep(HebbContractError, ValueError):
    pass


class NonFiniteState(HebbContractError, FloatingPointError):
    pass


class GridMismatch(HebbContractError, ValueError):
    pass


class DegenerateWindow(HebbContractError, ValueError):
    pass


class TrajectoryTooShort(HebbContractError, ValueError):
    pass


class NonSymmetricH(HebbContractError, ValueError):
    pass


# configuration / cli
class ConfigError(HebbContractError, ValueError):
    """Invalid run configuration.

    ``field`` is a dotted path into the config document (``network.edges[2].pre``)
    and ``line`` the 1-based source line when the JSON itself failed to parse.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class UnknownParam(ConfigError):
    pass


class EmptyRange(ConfigError):
    pass
