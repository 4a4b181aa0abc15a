from typing import Optional, NoReturn, Self, Any


class UnreachableError(RuntimeError):
    def __init__(self: Self, msg: Optional[str] = None):
        if msg is not None:
            super().__init__(f"unreachable code reached: {msg}")
        else:
            super().__init__("unreachable code reached")
        return None


def unreachable(msg: Optional[str] = None) -> NoReturn:
    raise UnreachableError(msg)


class MelDiffError(Exception):
    pass


class InvalidInputError(MelDiffError, ValueError):
    pass


class InvalidConfigError(MelDiffError, ValueError):
    pass


class ShapeError(MelDiffError, ValueError):
    pass


class KindError(MelDiffError, TypeError):
    pass


class StateError(MelDiffError, RuntimeError):
    pass


class TimestepError(MelDiffError, IndexError):
    pass


class InvalidStepError(MelDiffError, ValueError):
    pass


class ContractError(MelDiffError, ValueError):
    pass


class NonFiniteLossError(MelDiffError, FloatingPointError):
    def __init__(self: Self, step: int, loss: float, diagnostics: dict[str, Any]):
        self.step = step
        self.loss = loss
        self.diagnostics = diagnostics
        details = ", ".join(f"{k}={v}" for k, v in diagnostics.items())
        super().__init__(f"non-finite loss {loss} at step {step} ({details})")
        return None


class CheckpointIntegrityError(MelDiffError, IOError):
    pass


class UnsupportedVersionError(MelDiffError, IOError):
    def __init__(self: Self, found: str, supported: str):
        self.found = found
        self.supported = supported
        super().__init__(
            f"checkpoint format version {found} is not supported by this reader (format version {supported})"
        )
        return None


class OutputExistsError(MelDiffError, FileExistsError):
    pass

