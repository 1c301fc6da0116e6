"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports; otherwise (or when
``FLOWEMBED_PURE_PYTHON`` is set) the numpy ``_fallback`` module is used.
"""
import importlib
import logging
import os

log = logging.getLogger(__name__)

BACKENDS = ("compiled", "python")


def load(name):
    if name == "compiled":
        return importlib.import_module("flowembed._core")
    if name == "python":
        return importlib.import_module("flowembed._fallback")
    raise ValueError(f"unknown backend '{name}', expected one of {BACKENDS}")


def available():
    names = []
    for name in BACKENDS:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    if os.environ.get("FLOWEMBED_PURE_PYTHON"):
        return "python", load("python")
    try:
        return "compiled", load("compiled")
    except ImportError as exc:
        log.info("compiled core unavailable (%s); using numpy fallback", exc)
        return "python", load("python")


NAME, impl = _select()


def resolve(backend=None):
    """Kernel module for ``backend`` (a name, a module, or None for the default)."""
    if backend is None:
        return impl
    if isinstance(backend, str):
        return load(backend)
    return backend


def default_threads():
    try:
        return max(1, int(os.environ.get("FLOWEMBED_THREADS", "1")))
    except ValueError:
        return 1
