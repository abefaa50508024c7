"""Exception hierarchy shared by the engine, models and CLI."""


class LoopsimError(Exception):
    """Base class for all loopsim errors."""


class ConfigurationError(LoopsimError, ValueError):
    """Invalid scenario, routing, game or parameter configuration.

    ``path`` names the offending location (``users[0].params.alpha``) when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)

    def under(self, prefix: str) -> "ConfigurationError":
        """The same error relocated beneath ``prefix`` (``alpha`` -> ``users[0].params.alpha``)."""
        return ConfigurationError(self.message, f"{prefix}.{self.path}" if self.path else prefix)


class NumericError(LoopsimError, ArithmeticError):
    """A model produced a non-finite value."""

    def __init__(self, message, entity=None, tick=None):
        self.entity = entity
        self.tick = tick
        where = []
        if entity is not None:
            where.append(f"entity {entity}")
        if tick is not None:
            where.append(f"tick {tick}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class DegenerateUpdateError(NumericError):
    """A state update has no well-defined result (e.g. normalising a zero vector)."""


class BudgetExceededError(LoopsimError, RuntimeError):
    """An enumeration would exceed the configured size budget."""

    def __init__(self, size, budget):
        self.size = size
        self.budget = budget
        super().__init__(f"enumeration size {size} exceeds budget {budget}")
