"""Shared exception base for the package.

Concrete error classes live next to the operations that raise them; they all
derive from XComposeError so callers can catch package failures in one clause.
"""


class XComposeError(Exception):
    pass
