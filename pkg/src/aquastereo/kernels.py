"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy fallback.
``use_backend`` switches explicitly (tests and benchmarks compare both).
"""

from contextlib import contextmanager

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _fallback}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

_active = _compiled if _compiled is not None else _fallback

OK = _fallback.OK
NOT_CONVERGED = _fallback.NOT_CONVERGED
NOT_WATER_SIDE = _fallback.NOT_WATER_SIDE
plane_basis = _fallback.plane_basis


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return "compiled" if _active is _compiled else "python"


def set_backend(name):
    global _active
    try:
        _active = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}") from None


@contextmanager
def use_backend(name):
    previous = backend_name()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def fermat_paths(center, normal, inner, thickness, n_air, n_glass, n_water, points):
    return _active.fermat_paths(center, normal, inner, thickness, n_air, n_glass, n_water, points)


def window_stats(image, half):
    return _active.window_stats(image, half)


def best_in_domain(left, right, lmean, lnorm, rmean, rnorm, ul, vl, intervals, half, metric):
    return _active.best_in_domain(
        left, right, lmean, lnorm, rmean, rnorm, ul, vl, intervals, half, metric
    )


def domain_intervals(us, vs, inb, radius, width, height):
    return _active.domain_intervals(us, vs, inb, radius, width, height)
