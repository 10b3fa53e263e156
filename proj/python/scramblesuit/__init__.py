"""Python bindings for the scramblesuit transport library."""

try:
    from scramblesuit._scramblesuit import *  # noqa: F401,F403
except ImportError:  # extension placed on PYTHONPATH directly (test builds)
    from _scramblesuit import *  # noqa: F401,F403

__all__ = [
    "base32_encode",
    "base32_decode",
    "parse_descriptor",
    "format_descriptor",
    "WireSegment",
    "ServerContext",
    "ClientSession",
    "ServerSession",
    "ks_two_sample",
    "run_flow_trial",
]
