"""Transport coefficients, viscous stress, heat flux, entropy production.

The stress tensor uses the symmetric-gradient split

    S = mu(rho, theta) * D0(grad u) + lam(rho, theta) * tr(grad u) * I,

where D(A) = (A + A^T)/2 and D0(A) = D(A) - (tr A / d) * I, and the heat flux
is Fourier's law q = -kappa(rho, theta) * grad theta. Coefficient laws depend
on theta only; rho is accepted for interface uniformity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TransportModel",
    "AffineTheta",
    "PowerKappa",
    "BoundedGeneral",
    "sym_part",
    "traceless_sym",
    "viscous_stress",
    "heat_flux",
    "kappa_primitive",
    "entropy_production_density",
    "uniqueness_admissible",
]


def sym_part(a: np.ndarray) -> np.ndarray:
    """D(A) = (A + A^T)/2 on the trailing two axes."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def traceless_sym(a: np.ndarray) -> np.ndarray:
    """D0(A) = D(A) - (tr A / d) I on the trailing two axes."""
    d = a.shape[-1]
    sym = sym_part(a)
    tr = np.trace(a, axis1=-2, axis2=-1)
    return sym - tr[..., None, None] / d * np.eye(d)


class TransportModel:
    """Base class: positive, continuously differentiable coefficient laws."""

    kind = "abstract"

    def mu(self, rho, theta):
        raise NotImplementedError

    def lam(self, rho, theta):
        raise NotImplementedError

    def kappa(self, rho, theta):
        raise NotImplementedError


@dataclass(frozen=True)
class AffineTheta(TransportModel):
    """mu = c_mu*(1+theta), lam = c_lambda*(1+theta), kappa = kappa0*(1+theta)."""

    c_mu: float = 0.05
    c_lambda: float = 0.05
    kappa0: float = 0.05
    kind: str = field(default="affine_theta", init=False)

    def __post_init__(self):
        if not (self.c_mu > 0.0 and self.kappa0 > 0.0):
            raise ValueError("c_mu and kappa0 must be > 0")
        if self.c_lambda < 0.0:
            raise ValueError("c_lambda must be >= 0")

    def mu(self, rho, theta):
        return self.c_mu * (1.0 + np.asarray(theta, dtype=float))

    def lam(self, rho, theta):
        return self.c_lambda * (1.0 + np.asarray(theta, dtype=float))

    def kappa(self, rho, theta):
        return self.kappa0 * (1.0 + np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class PowerKappa(TransportModel):
    """mu = mu0 + mu1*theta, lam = lambda0 + lambda1*theta, kappa = kappa1 + kappa2*theta**beta."""

    mu0: float = 0.05
    mu1: float = 0.05
    lambda0: float = 0.05
    lambda1: float = 0.05
    kappa1: float = 0.05
    kappa2: float = 0.05
    beta: float = 2.0
    kind: str = field(default="power_kappa", init=False)

    def __post_init__(self):
        if not (self.mu0 > 0.0 and self.kappa1 > 0.0):
            raise ValueError("mu0 and kappa1 must be > 0")
        for name in ("mu1", "lambda0", "lambda1", "kappa2"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    def mu(self, rho, theta):
        return self.mu0 + self.mu1 * np.asarray(theta, dtype=float)

    def lam(self, rho, theta):
        return self.lambda0 + self.lambda1 * np.asarray(theta, dtype=float)

    def kappa(self, rho, theta):
        return self.kappa1 + self.kappa2 * np.asarray(theta, dtype=float) ** self.beta


@dataclass(frozen=True)
class BoundedGeneral(TransportModel):
    """Envelope-only transport class used by validators, never by the solver.

    Declares two-sided bounds mu_lo*(1+theta) <= mu <= mu_hi*(1+theta),
    0 <= lam <= lam_hi*(1+theta), kappa_lo*(1+theta**beta) <= kappa <=
    kappa_hi*(1+theta**beta). ``check_envelope`` tests a concrete law against
    the declared envelope on theta samples.
    """

    mu_lo: float = 0.01
    mu_hi: float = 1.0
    lam_hi: float = 1.0
    kappa_lo: float = 0.01
    kappa_hi: float = 1.0
    beta: float = 2.0
    kind: str = field(default="bounded_general", init=False)

    def __post_init__(self):
        if not (0.0 < self.mu_lo <= self.mu_hi):
            raise ValueError("need 0 < mu_lo <= mu_hi")
        if not (0.0 < self.kappa_lo <= self.kappa_hi):
            raise ValueError("need 0 < kappa_lo <= kappa_hi")

    def _reject(self):
        raise TypeError("BoundedGeneral is an envelope validator; it has no coefficient law")

    def mu(self, rho, theta):
        self._reject()

    def lam(self, rho, theta):
        self._reject()

    def kappa(self, rho, theta):
        self._reject()

    def check_envelope(self, model: TransportModel, theta_samples) -> dict:
        theta = np.asarray(theta_samples, dtype=float)
        mu = model.mu(None, theta)
        lam = model.lam(None, theta)
        kap = model.kappa(None, theta)
        env_mu = (self.mu_lo * (1.0 + theta) <= mu) & (mu <= self.mu_hi * (1.0 + theta))
        env_lam = (0.0 <= lam) & (lam <= self.lam_hi * (1.0 + theta))
        env_kap = (self.kappa_lo * (1.0 + theta**self.beta) <= kap) & (kap <= self.kappa_hi * (1.0 + theta**self.beta))
        return {
            "mu_ok": bool(np.all(env_mu)),
            "lam_ok": bool(np.all(env_lam)),
            "kappa_ok": bool(np.all(env_kap)),
            "mu_violations": int(np.sum(~env_mu)),
            "lam_violations": int(np.sum(~env_lam)),
            "kappa_violations": int(np.sum(~env_kap)),
        }


def viscous_stress(model: TransportModel, rho, theta, grad_u: np.ndarray) -> np.ndarray:
    """S = mu*D0(grad u) + lam*tr(grad u)*I, on the trailing two axes of grad_u."""
    d = grad_u.shape[-1]
    mu = np.asarray(model.mu(rho, theta), dtype=float)
    lam = np.asarray(model.lam(rho, theta), dtype=float)
    tr = np.trace(grad_u, axis1=-2, axis2=-1)
    return mu[..., None, None] * traceless_sym(grad_u) + (lam * tr)[..., None, None] * np.eye(d)


def heat_flux(model: TransportModel, rho, theta, grad_theta: np.ndarray) -> np.ndarray:
    """Fourier law q = -kappa * grad theta (components on the trailing axis)."""
    kap = np.asarray(model.kappa(rho, theta), dtype=float)
    return -kap[..., None] * grad_theta


def kappa_primitive(model: TransportModel, theta):
    """K(theta) with K'(theta) = kappa(theta)/theta and K(1) = 0.

    AffineTheta: kappa0*(log theta + theta - 1). PowerKappa: kappa1*log theta
    + kappa2*(theta**beta - 1)/beta (the beta -> 0 limit being log theta).
    """
    theta = np.asarray(theta, dtype=float)
    if isinstance(model, AffineTheta):
        return model.kappa0 * (np.log(theta) + theta - 1.0)
    if isinstance(model, PowerKappa):
        if model.beta == 0.0:
            return (model.kappa1 + model.kappa2) * np.log(theta)
        return model.kappa1 * np.log(theta) + model.kappa2 * (theta**model.beta - 1.0) / model.beta
    raise TypeError(f"no closed-form primitive for transport kind {model.kind!r}")


def entropy_production_density(model: TransportModel, rho, theta, d_u: np.ndarray, d_theta: np.ndarray):
    """sigma = (1/theta) * (S(d_u):d_u + kappa*|d_theta|**2/theta) >= 0.

    ``d_u`` is the symmetric velocity-gradient surrogate, ``d_theta`` the
    temperature-gradient surrogate.
    """
    theta = np.asarray(theta, dtype=float)
    stress = viscous_stress(model, rho, theta, d_u)
    work = np.einsum("...ij,...ij->...", stress, d_u)
    kap = np.asarray(model.kappa(rho, theta), dtype=float)
    cond = kap * np.sum(np.asarray(d_theta, dtype=float) ** 2, axis=-1) / theta
    return (work + cond) / theta


def uniqueness_admissible(model: TransportModel) -> tuple[bool, str]:
    """Gate for the conductivity growth the uniqueness estimate can absorb.

    PowerKappa needs beta <= 2: the residual conduction coupling scales like
    theta**beta and only theta**2 is dominated by the quadratic radiation
    energy. AffineTheta (linear growth) is always admissible.
    """
    if isinstance(model, AffineTheta):
        return True, "affine coefficient growth (beta = 1) is admissible"
    if isinstance(model, PowerKappa):
        if model.beta <= 2.0:
            return True, f"kappa growth beta = {model.beta} <= 2 is admissible"
        return False, (
            f"kappa growth beta = {model.beta} exceeds 2: the conduction remainder grows like "
            "theta**beta while the available ballistic coercivity only controls theta**2, so the "
            "Gronwall absorption step fails"
        )
    return False, f"transport kind {model.kind!r} has no pointwise law to run with"
