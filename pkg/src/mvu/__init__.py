"""A session-typed Model-View-Update calculus: parser, checker, runtime."""

from .syntax import Kind, Term, Type, SessionType  # noqa: F401
