"""Exception hierarchy shared across the package."""


class NormRouteError(Exception):
    pass


class ContractError(NormRouteError, ValueError):
    """A caller broke a documented precondition (bad dimensions, range, ...)."""


class ValidationError(NormRouteError, ValueError):
    pass


class LookupFailure(NormRouteError, KeyError):
    """Unknown member, question, or norm name."""

    def __str__(self) -> str:
        # KeyError repr-quotes its argument; keep messages readable.
        return str(self.args[0]) if self.args else ""


class RecordParseError(NormRouteError, ValueError):
    """Malformed community file; carries the 1-based line of the bad record."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NormSyntaxError(NormRouteError, ValueError):
    """Raised by the norm parser; ``diagnostics`` lists every error found."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(d.format() for d in self.diagnostics))


class ReloadRejected(NormRouteError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("norm reload rejected:\n" + "\n".join(d.format() for d in self.diagnostics))
