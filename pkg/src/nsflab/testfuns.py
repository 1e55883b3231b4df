"""Finite families of space-time test functions for weak-form checks.

Every object packs analytic callables over ``(t, pts)`` where ``pts`` has
shape ``(..., d)`` (cell-center coordinates, ghost centers included when the
caller samples a padded grid):

* scalar tests: ``value -> (...,)``, ``grad -> (..., d)``
* vector tests: ``value -> (..., d)``, ``grad -> (..., d, d)`` with
  ``[..., j, k] = d value_j / d x_k``
* tensor tests: ``value -> (..., d, d)``, symmetric by construction

Each spatial shape is emitted twice, with time factors ``1`` and ``t``, so the
trapezoidal time quadrature used by the residual evaluators is exact on the
steady and linear-in-time pieces.  Families are deliberately small: the weak
identities are affine in the test function, so a handful of independent shapes
already pins down the residual scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ScalarTest",
    "VectorTest",
    "TensorTest",
    "ThetaRef",
    "scalar_tests",
    "entropy_tests",
    "velocity_tests",
    "flux_tests",
    "tensor_tests",
    "theta_refs",
    "theta_ref_constant",
    "theta_ref_from_strong",
]

Array = np.ndarray
SpaceFn = Callable[[Array], Array]


@dataclass(frozen=True)
class ScalarTest:
    """Scalar test function with analytic time derivative and gradient."""

    label: str
    value: Callable[[float, Array], Array]
    dt: Callable[[float, Array], Array]
    grad: Callable[[float, Array], Array]
    zero_trace: bool = False
    nonnegative: bool = False


@dataclass(frozen=True)
class VectorTest:
    """Vector test function; ``grad[..., j, k] = d value_j / d x_k``."""

    label: str
    value: Callable[[float, Array], Array]
    dt: Callable[[float, Array], Array]
    grad: Callable[[float, Array], Array]
    zero_trace: bool = False


@dataclass(frozen=True)
class TensorTest:
    """Symmetric-matrix test function (no boundary condition)."""

    label: str
    value: Callable[[float, Array], Array]
    dt: Callable[[float, Array], Array]


@dataclass(frozen=True)
class ThetaRef:
    """Positive reference temperature with analytic dt and gradient."""

    label: str
    value: Callable[[float, Array], Array]
    dt: Callable[[float, Array], Array]
    grad: Callable[[float, Array], Array]


def _ones(pts: Array) -> Array:
    return np.ones(pts.shape[:-1])


def _zeros(pts: Array) -> Array:
    return np.zeros(pts.shape[:-1])


def _zeros_vec(pts: Array) -> Array:
    return np.zeros(pts.shape[:-1] + (pts.shape[-1],))


def _with_time(label: str, f: SpaceFn, gf: SpaceFn, cls, zero_shape, **flags):
    """Emit (steady, linear-in-time) variants of one spatial shape."""

    steady = cls(
        label=f"{label}*1",
        value=lambda t, pts: f(pts),
        dt=lambda t, pts: zero_shape(pts),
        grad=lambda t, pts: gf(pts),
        **flags,
    )
    linear = cls(
        label=f"{label}*t",
        value=lambda t, pts: t * f(pts),
        dt=lambda t, pts: f(pts),
        grad=lambda t, pts: t * gf(pts),
        **flags,
    )
    return [steady, linear]


def _scalar_bases(dim: int) -> Sequence[tuple[str, SpaceFn, SpaceFn]]:
    pi = np.pi
    if dim == 1:
        return [
            ("one", _ones, _zeros_vec),
            ("x", lambda p: p[..., 0],
             lambda p: np.stack([_ones(p)], axis=-1)),
            ("x2", lambda p: p[..., 0] ** 2,
             lambda p: np.stack([2.0 * p[..., 0]], axis=-1)),
            ("sin_pix", lambda p: np.sin(pi * p[..., 0]),
             lambda p: np.stack([pi * np.cos(pi * p[..., 0])], axis=-1)),
            ("cos_pix", lambda p: np.cos(pi * p[..., 0]),
             lambda p: np.stack([-pi * np.sin(pi * p[..., 0])], axis=-1)),
        ]
    return [
        ("one", _ones, _zeros_vec),
        ("x", lambda p: p[..., 0],
         lambda p: np.stack([_ones(p), _zeros(p)], axis=-1)),
        ("y", lambda p: p[..., 1],
         lambda p: np.stack([_zeros(p), _ones(p)], axis=-1)),
        ("xy", lambda p: p[..., 0] * p[..., 1],
         lambda p: np.stack([p[..., 1], p[..., 0]], axis=-1)),
        ("sin_pix_cos_piy",
         lambda p: np.sin(pi * p[..., 0]) * np.cos(pi * p[..., 1]),
         lambda p: np.stack(
             [pi * np.cos(pi * p[..., 0]) * np.cos(pi * p[..., 1]),
              -pi * np.sin(pi * p[..., 0]) * np.sin(pi * p[..., 1])],
             axis=-1)),
    ]


def scalar_tests(dim: int) -> list[ScalarTest]:
    """C^1 scalar tests with free boundary values (continuity identity)."""

    out: list[ScalarTest] = []
    for label, f, gf in _scalar_bases(dim):
        out += _with_time(label, f, gf, ScalarTest, _zeros)
    return out


def _entropy_bases(dim: int) -> Sequence[tuple[str, SpaceFn, SpaceFn]]:
    pi = np.pi
    if dim == 1:
        return [
            ("sin2_pix", lambda p: np.sin(pi * p[..., 0]) ** 2,
             lambda p: np.stack(
                 [pi * np.sin(2.0 * pi * p[..., 0])], axis=-1)),
            ("bump4",
             lambda p: 16.0 * (p[..., 0] * (1.0 - p[..., 0])) ** 2,
             lambda p: np.stack(
                 [32.0 * p[..., 0] * (1.0 - p[..., 0]) * (1.0 - 2.0 * p[..., 0])],
                 axis=-1)),
        ]

    def s2(v: Array) -> Array:
        return np.sin(pi * v) ** 2

    def ds2(v: Array) -> Array:
        return pi * np.sin(2.0 * pi * v)

    return [
        ("sin2_pix_sin2_piy",
         lambda p: s2(p[..., 0]) * s2(p[..., 1]),
         lambda p: np.stack(
             [ds2(p[..., 0]) * s2(p[..., 1]), s2(p[..., 0]) * ds2(p[..., 1])],
             axis=-1)),
        ("bump4_xy",
         lambda p: 16.0 * (p[..., 0] * (1.0 - p[..., 0])) ** 2
         * (p[..., 1] * (1.0 - p[..., 1])) ** 2 * 16.0,
         lambda p: np.stack(
             [32.0 * p[..., 0] * (1.0 - p[..., 0]) * (1.0 - 2.0 * p[..., 0])
              * 16.0 * (p[..., 1] * (1.0 - p[..., 1])) ** 2,
              16.0 * (p[..., 0] * (1.0 - p[..., 0])) ** 2
              * 32.0 * p[..., 1] * (1.0 - p[..., 1]) * (1.0 - 2.0 * p[..., 1])],
             axis=-1)),
    ]


def entropy_tests(dim: int) -> list[ScalarTest]:
    """Nonnegative scalar tests vanishing on the boundary (entropy identity)."""

    out: list[ScalarTest] = []
    for label, f, gf in _entropy_bases(dim):
        out += _with_time(label, f, gf, ScalarTest, _zeros,
                          zero_trace=True, nonnegative=True)
    return out


def _vector_bases_zero_trace(dim: int):
    pi = np.pi
    if dim == 1:
        def mk(fn, dfn):
            return (lambda p: np.stack([fn(p[..., 0])], axis=-1),
                    lambda p: np.stack([dfn(p[..., 0])], axis=-1)[..., None])

        v1, g1 = mk(lambda x: np.sin(pi * x), lambda x: pi * np.cos(pi * x))
        v2, g2 = mk(lambda x: np.sin(2.0 * pi * x),
                    lambda x: 2.0 * pi * np.cos(2.0 * pi * x))
        v3, g3 = mk(lambda x: 4.0 * x * (1.0 - x),
                    lambda x: 4.0 * (1.0 - 2.0 * x))
        return [("sin_pix", v1, g1), ("sin_2pix", v2, g2), ("parab", v3, g3)]

    def sp_(v):
        return np.sin(pi * v)

    def cp_(v):
        return np.cos(pi * v)

    def one_comp(j):
        def val(p):
            out = np.zeros(p.shape[:-1] + (2,))
            out[..., j] = sp_(p[..., 0]) * sp_(p[..., 1])
            return out

        def grad(p):
            out = np.zeros(p.shape[:-1] + (2, 2))
            out[..., j, 0] = pi * cp_(p[..., 0]) * sp_(p[..., 1])
            out[..., j, 1] = pi * sp_(p[..., 0]) * cp_(p[..., 1])
            return out

        return val, grad

    vx, gx = one_comp(0)
    vy, gy = one_comp(1)

    def v_mix(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([np.sin(2.0 * pi * x) * sp_(y),
                         -sp_(x) * np.sin(2.0 * pi * y)], axis=-1)

    def g_mix(p):
        x, y = p[..., 0], p[..., 1]
        out = np.empty(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = 2.0 * pi * np.cos(2.0 * pi * x) * sp_(y)
        out[..., 0, 1] = np.sin(2.0 * pi * x) * pi * cp_(y)
        out[..., 1, 0] = -pi * cp_(x) * np.sin(2.0 * pi * y)
        out[..., 1, 1] = -sp_(x) * 2.0 * pi * np.cos(2.0 * pi * y)
        return out

    return [("sinsin_ex", vx, gx), ("sinsin_ey", vy, gy), ("swirl", v_mix, g_mix)]


def velocity_tests(dim: int) -> list[VectorTest]:
    """C^1 vector tests vanishing on the boundary (momentum identity)."""

    out: list[VectorTest] = []
    for label, f, gf in _vector_bases_zero_trace(dim):
        out += _with_time(label, f, gf, VectorTest, _zeros_vec, zero_trace=True)
    return out


def _vector_bases_free(dim: int):
    pi = np.pi
    if dim == 1:
        def mk(fn, dfn):
            return (lambda p: np.stack([fn(p[..., 0])], axis=-1),
                    lambda p: np.stack([dfn(p[..., 0])], axis=-1)[..., None])

        v0, g0 = mk(lambda x: np.ones_like(x), lambda x: np.zeros_like(x))
        v1, g1 = mk(lambda x: x, lambda x: np.ones_like(x))
        v2, g2 = mk(lambda x: np.sin(pi * x), lambda x: pi * np.cos(pi * x))
        v3, g3 = mk(lambda x: np.cos(pi * x), lambda x: -pi * np.sin(pi * x))
        return [("e1", v0, g0), ("x_e1", v1, g1),
                ("sin_pix_e1", v2, g2), ("cos_pix_e1", v3, g3)]

    def const(j):
        def val(p):
            out = np.zeros(p.shape[:-1] + (2,))
            out[..., j] = 1.0
            return out

        def grad(p):
            return np.zeros(p.shape[:-1] + (2, 2))

        return val, grad

    v0, g0 = const(0)
    v1, g1 = const(1)

    def v_lin(p):
        return np.stack([p[..., 0], p[..., 1]], axis=-1)

    def g_lin(p):
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        return out

    def v_trig(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([np.sin(pi * x) * np.cos(pi * y),
                         np.cos(pi * x) * np.sin(pi * y)], axis=-1)

    def g_trig(p):
        x, y = p[..., 0], p[..., 1]
        out = np.empty(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = pi * np.cos(pi * x) * np.cos(pi * y)
        out[..., 0, 1] = -pi * np.sin(pi * x) * np.sin(pi * y)
        out[..., 1, 0] = -pi * np.sin(pi * x) * np.sin(pi * y)
        out[..., 1, 1] = pi * np.cos(pi * x) * np.cos(pi * y)
        return out

    return [("e1", v0, g0), ("e2", v1, g1), ("radial", v_lin, g_lin),
            ("trig", v_trig, g_trig)]


def flux_tests(dim: int) -> list[VectorTest]:
    """C^1 vector tests with free boundary values (temperature identity)."""

    out: list[VectorTest] = []
    for label, f, gf in _vector_bases_free(dim):
        out += _with_time(label, f, gf, VectorTest, _zeros_vec)
    return out


def _tensor_bases(dim: int):
    pi = np.pi
    if dim == 1:
        def mk(fn):
            return lambda p: fn(p[..., 0])[..., None, None]

        return [
            ("id", mk(np.ones_like)),
            ("x", mk(lambda x: x)),
            ("sin_pix", mk(lambda x: np.sin(pi * x))),
            ("cos_2pix", mk(lambda x: np.cos(2.0 * pi * x))),
        ]

    def t_id(p):
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        return out

    def t_diag(p):
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = p[..., 0]
        out[..., 1, 1] = p[..., 1]
        return out

    def t_off(p):
        s = p[..., 0] + p[..., 1]
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 1] = s
        out[..., 1, 0] = s
        return out

    def t_trig(p):
        x, y = p[..., 0], p[..., 1]
        out = np.empty(p.shape[:-1] + (2, 2))
        out[..., 0, 0] = np.sin(pi * x) * np.cos(pi * y)
        out[..., 1, 1] = np.cos(pi * x) * np.sin(pi * y)
        off = np.cos(pi * x) * np.cos(pi * y)
        out[..., 0, 1] = off
        out[..., 1, 0] = off
        return out

    return [("id", t_id), ("diag_xy", t_diag), ("offdiag", t_off),
            ("trig", t_trig)]


def tensor_tests(dim: int) -> list[TensorTest]:
    """Symmetric C^1 matrix tests (velocity-gradient compatibility)."""

    out: list[TensorTest] = []
    for label, f in _tensor_bases(dim):
        out.append(TensorTest(label=f"{label}*1",
                              value=lambda t, pts, f=f: f(pts),
                              dt=lambda t, pts, f=f: np.zeros_like(f(pts))))
        out.append(TensorTest(label=f"{label}*t",
                              value=lambda t, pts, f=f: t * f(pts),
                              dt=lambda t, pts, f=f: f(pts)))
    return out


def _bump(dim: int):
    pi = np.pi
    if dim == 1:
        def val(p):
            return np.sin(pi * p[..., 0])

        def grad(p):
            return np.stack([pi * np.cos(pi * p[..., 0])], axis=-1)

        return val, grad

    def val(p):
        return np.sin(pi * p[..., 0]) * np.sin(pi * p[..., 1])

    def grad(p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([pi * np.cos(pi * x) * np.sin(pi * y),
                         pi * np.sin(pi * x) * np.cos(pi * y)], axis=-1)

    return val, grad


def theta_refs(dim: int, base: tuple[float, float, float] = (1.0, 0.0, 0.0),
               amps: Sequence[float] = (0.0, 0.15, -0.1),
               wobble: float = 0.0, t_max: float = 1.0) -> list[ThetaRef]:
    """Positive references sharing the affine boundary trace ``base``.

    Each member is ``base(x) + a * bump(x) * (1 + wobble * t)`` where the bump
    vanishes on the boundary, so every member carries the same trace as the
    boundary data it is meant to accompany.  Positivity is checked on a sample
    lattice over ``[0, 1]^dim x [0, t_max]`` at construction.
    """

    c0, cx, cy = base
    bump_v, bump_g = _bump(dim)

    def base_val(p):
        out = c0 + cx * p[..., 0]
        if dim == 2:
            out = out + cy * p[..., 1]
        return out * np.ones(p.shape[:-1])

    def base_grad(p):
        comps = [cx * np.ones(p.shape[:-1])]
        if dim == 2:
            comps.append(cy * np.ones(p.shape[:-1]))
        return np.stack(comps, axis=-1)

    axes = [np.linspace(0.0, 1.0, 33)] * dim
    lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    refs: list[ThetaRef] = []
    for a in amps:
        def val(t, pts, a=a):
            return base_val(pts) + a * bump_v(pts) * (1.0 + wobble * t)

        def dt(t, pts, a=a):
            return a * bump_v(pts) * wobble

        def grad(t, pts, a=a):
            return base_grad(pts) + a * bump_g(pts)[...] * (1.0 + wobble * t)

        for t_chk in (0.0, t_max):
            if np.min(val(t_chk, lattice)) <= 0.0:
                raise ValueError(
                    "reference temperature must stay positive on the domain")
        refs.append(ThetaRef(label=f"affine+{a}*bump", value=val, dt=dt,
                             grad=grad))
    return refs


def theta_ref_constant(c: float, dim: int = 1) -> ThetaRef:
    """The constant reference ``c > 0``."""

    if c <= 0.0:
        raise ValueError("reference temperature must stay positive on the domain")

    return ThetaRef(
        label=f"const_{c}",
        value=lambda t, pts: c * np.ones(pts.shape[:-1]),
        dt=lambda t, pts: np.zeros(pts.shape[:-1]),
        grad=lambda t, pts: np.zeros(pts.shape[:-1] + (pts.shape[-1],)),
    )


def theta_ref_from_strong(sol) -> ThetaRef:
    """Wrap a smooth solution's temperature as a reference profile."""

    return ThetaRef(label=f"strong_{sol.profile}", value=sol.theta,
                    dt=sol.dtheta_dt, grad=sol.grad_theta)
