from typing import Generic, TypeVar, Optional, Self
from types import TracebackType
from threading import Lock
from contextlib import contextmanager


@contextmanager
def _locked(lock: Lock):
    lock.acquire()
    try:
        yield lock
    finally:
        lock.release()
    return None


T = TypeVar("T", infer_variance=True)


class Mutex(Generic[T]):
    """A value only reachable while holding its lock."""

    def __init__(self: Self, value: T):
        self._mtx = Lock()
        self._value = value
        return None

    def __repr__(self: Self) -> str:
        return f"Mutex({self._value!r})"

    def __enter__(self: Self) -> T:
        self._mtx.acquire()
        return self._value

    def __exit__(
        self: Self,
        exc_type: Optional[type],
        exc: Optional[BaseException],
        tb: Optional[TracebackType],
    ) -> bool:
        self._mtx.release()
        return False

    def get(self: Self) -> T:
        with _locked(self._mtx):
            return self._value

    def set(self: Self, new: T):
        with _locked(self._mtx):
            self._value = new
        return None

