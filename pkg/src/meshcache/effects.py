"""Cooperative effects shared by the virtual and live transport backends.

Client actors and sidecar handlers are written once, as generators that
yield effects instead of blocking:

    response = yield Call(link, request)   # unary round trip
    yield Sleep(delay_ns)                  # pause this actor

The virtual backend (sim.py) interprets effects on a deterministic event
loop; the live backend interprets them right here with blocking socket
sends and real sleeps (drive()). Handlers may also be plain functions that
return a response directly; invoke_handler() normalizes both shapes and
converts uncaught handler exceptions into ERROR responses so one bad
request never takes down a connection or a simulation.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass
from typing import Any, Callable, Generator, Protocol, Union

from .clock import Clock
from .wire import Message

Handler = Callable[[Message], Union[Message, Generator]]


class Link(Protocol):
    """Unary forwarding interface: one request in, one response out."""

    def send(self, request: Message) -> Message: ...


class TransportError(Exception):
    """Request could not complete: connection refused, timeout, bad peer."""


@dataclass(frozen=True)
class Sleep:
    duration_ns: int


@dataclass(frozen=True)
class Call:
    link: Any  # anything with the ForwardingInterface send() contract
    message: Message


def invoke_handler(handler: Handler, request: Message) -> Generator:
    """Run a handler against one request, yielding its effects through.

    Returns the handler's response; any exception the handler lets escape
    becomes a status-ERROR response carrying the exception text.
    """
    try:
        out = handler(request)
        if inspect.isgenerator(out):
            response = yield from out
        else:
            response = out
        if not isinstance(response, Message) or response.is_request:
            raise TypeError("handler must produce a response Message")
    except Exception as exc:  # noqa: BLE001 - isolation is the contract
        response = Message.error_response(request.method, f"{type(exc).__name__}: {exc}")
    return response


def drive(task: Union[Message, Generator], clock: Clock) -> Message:
    """Run an effect generator to completion against real time and links.

    Sleep waits on the clock; Call performs a blocking link.send(). A
    TransportError from a link is thrown into the generator so the actor
    can handle it; unhandled, it propagates to the caller.
    """
    if isinstance(task, Message):
        return task
    value: Any = None
    error: BaseException | None = None
    while True:
        try:
            if error is not None:
                effect = task.throw(error)
            else:
                effect = task.send(value)
        except StopIteration as stop:
            return stop.value
        value, error = None, None
        if isinstance(effect, Sleep):
            clock.sleep_until(clock.now_ns() + effect.duration_ns)
        elif isinstance(effect, Call):
            try:
                value = effect.link.send(effect.message)
            except TransportError as exc:
                error = exc
        else:
            raise TypeError(f"unknown effect {effect!r}")


class DirectLink:
    """In-process ForwardingInterface calling a handler synchronously.

    Useful for unit tests and for co-deployed components that share a
    process; nested effects in the handler are driven against the clock.
    """

    def __init__(self, handler: Handler, clock: Clock) -> None:
        self._handler = handler
        self._clock = clock

    def send(self, request: Message) -> Message:
        return drive(invoke_handler(self._handler, request), self._clock)
