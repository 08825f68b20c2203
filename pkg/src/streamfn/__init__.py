"""Stream functions: serverless instances that live for exactly one stream."""

from .events import Data, Eos, Event, Hello, decode_frame, encode_frame, make_event
from .sdk import (
    FunctionRegistry,
    HandlerResult,
    builtin_registry,
    frame_delta_fn,
    generator_function,
    grayscale_fn,
    identity_fn,
    run_handler,
)

__version__ = "0.1.0"

__all__ = [
    "Data",
    "Eos",
    "Event",
    "FunctionRegistry",
    "HandlerResult",
    "Hello",
    "builtin_registry",
    "decode_frame",
    "encode_frame",
    "frame_delta_fn",
    "generator_function",
    "grayscale_fn",
    "identity_fn",
    "make_event",
    "run_handler",
]
