"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``XFMR_BACKEND=python`` to force the fallback (``ext`` to require the
extension).
"""
import importlib
import os

_NAMES = {"ext": "xfmr_tl.nn._kernels", "python": "xfmr_tl.nn._kernels_py"}


def load(name: str):
    return importlib.import_module(_NAMES[name])


def available() -> list[str]:
    out = []
    for name in _NAMES:
        try:
            load(name)
        except ImportError:
            continue
        out.append(name)
    return out


def _select():
    wanted = os.environ.get("XFMR_BACKEND", "").strip().lower()
    if wanted in _NAMES:
        return wanted, load(wanted)
    try:
        return "ext", load("ext")
    except ImportError:
        return "python", load("python")


BACKEND, _impl = _select()

bn_train = _impl.bn_train
bn_eval = _impl.bn_eval
bn_backward = _impl.bn_backward
adam_update = _impl.adam_update


def use(name: str) -> None:
    """Switch the active backend for this process (tests and benchmarks)."""
    global BACKEND, _impl, bn_train, bn_eval, bn_backward, adam_update
    _impl = load(name)
    BACKEND = name
    bn_train = _impl.bn_train
    bn_eval = _impl.bn_eval
    bn_backward = _impl.bn_backward
    adam_update = _impl.adam_update
