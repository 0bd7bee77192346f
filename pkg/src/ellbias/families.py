"""Elliptical density families: generating functions, radial moments, sampling.

A q-variate elliptical density is |Sigma|^{-1/2} g((y-mu)' Sigma^{-1} (y-mu))
where g is the density generating function. Each family here provides

* ``log_g(u, q)`` and ``g(u, q)``,
* ``w_g(u, q)``, the derivative of log g, which drives the score weights
  v = -2 W_g(u),
* the radial moments psi_{(l,k)} = E(W_g(r)^l r^k) with r = ||L||^2 and
  L spherical, via closed forms for the built-ins and adaptive quadrature
  for custom families,
* exact random sampling for the built-ins.

The derived scalar constants (c, c*, omega~, eta1, eta2) that enter the
Fisher information and the second-order bias machinery are bundled in
:class:`PsiMoments`.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .exceptions import DomainError, LinAlgError, QuadratureError

__all__ = [
    "DensityFamily",
    "Normal",
    "Cauchy",
    "StudentT",
    "PowerExponential",
    "CustomFamily",
    "PsiMoments",
    "w_g",
    "psi_moment",
    "psi_moment_quadrature",
    "derived_constants",
    "sample",
]

_PSI_KEYS = ((2, 1), (2, 2), (3, 2), (3, 3))

# Tolerances for the adaptive quadrature of the radial-moment integrals.
# The integrands are smooth with light or polynomial tails after the
# s = t/(1-t) substitution onto (0, 1).
_QUAD_EPSABS = 1e-10
_QUAD_EPSREL = 1e-10
_QUAD_LIMIT = 2 ** 14


@dataclass(frozen=True)
class PsiMoments:
    """Radial psi moments and derived constants for one block dimension q.

    c = 4 psi22 / (q (q+2)),  c* = 8 psi32 / (q (q+2)),
    omega~ = psi33 / (q (q+2) (q+4)),
    eta1 = c* + 4 psi21 / q,  eta2 = c* - 4 psi21 / q.

    Under the normal family these reduce to c = 1, 8 omega~ = -1,
    eta1 = 0, eta2 = -2 for every q.
    """

    q: int
    psi21: float
    psi22: float
    psi32: float
    psi33: float
    c: float
    c_star: float
    omega_tilde: float
    eta1: float
    eta2: float

    @property
    def m1(self):
        """Location-block weight 4 psi21 / q of the matrix M."""
        return 4.0 * self.psi21 / self.q


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise DomainError("quadratic form u must be nonnegative")
    return u


class DensityFamily:
    """Base class. Parameters are fixed at construction and never estimated."""

    name = "base"

    def __init__(self):
        self._psi_cache = {}

    # -- density generating function -------------------------------------
    def log_g(self, u, q):
        raise NotImplementedError

    def g(self, u, q):
        return np.exp(self.log_g(u, q))

    def w_g(self, u, q):
        """d log g / du, vectorized over u."""
        raise NotImplementedError

    # -- radial moments ---------------------------------------------------
    def _psi_closed(self, q, l, k):
        return None  # no closed form: fall back to quadrature

    def psi(self, q, l, k):
        if (l, k) not in _PSI_KEYS:
            raise DomainError(f"psi moment ({l},{k}) is not used by this model class")
        if q < 1 or q != int(q):
            raise DomainError(f"block dimension q must be a positive integer, got {q}")
        key = (int(q), l, k)
        if key not in self._psi_cache:
            val = self._psi_closed(int(q), l, k)
            if val is None:
                val = psi_moment_quadrature(self, int(q), l, k)
            self._psi_cache[key] = float(val)
        return self._psi_cache[key]

    def constants(self, q):
        """All psi moments plus the derived scalars for block dimension q."""
        key = ("const", int(q))
        if key not in self._psi_cache:
            p21 = self.psi(q, 2, 1)
            p22 = self.psi(q, 2, 2)
            p32 = self.psi(q, 3, 2)
            p33 = self.psi(q, 3, 3)
            c = 4.0 * p22 / (q * (q + 2.0))
            c_star = 8.0 * p32 / (q * (q + 2.0))
            omega = p33 / (q * (q + 2.0) * (q + 4.0))
            eta1 = c_star + 4.0 * p21 / q
            eta2 = c_star - 4.0 * p21 / q
            self._psi_cache[key] = PsiMoments(
                q=int(q), psi21=p21, psi22=p22, psi32=p32, psi33=p33,
                c=c, c_star=c_star, omega_tilde=omega, eta1=eta1, eta2=eta2,
            )
        return self._psi_cache[key]

    # -- sampling ----------------------------------------------------------
    def _radial_times_sphere(self, r, rng, q, size):
        z = rng.standard_normal((size, q))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return r[:, None] * z

    def _standard_draws(self, q, rng, size):
        raise DomainError(
            f"random sampling is implemented for built-in families only, not {self.name}"
        )

    def sample(self, mu, sigma, rng, size=None):
        """Draw from El_q(mu, Sigma) via the stochastic representation.

        Returns shape (q,) when ``size`` is None, else (size, q).
        """
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        q = mu.size
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        if sigma.shape != (q, q):
            raise DomainError(f"sigma must be {q}x{q}, got {sigma.shape}")
        try:
            lower = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise LinAlgError(f"sigma is not positive definite: {exc}") from exc
        n = 1 if size is None else int(size)
        draws = mu + self._standard_draws(q, rng, n) @ lower.T
        return draws[0] if size is None else draws

    # -- variance scale (for tests and reports) ----------------------------
    def variance_scale(self, q=1):
        """xi with Var(Y) = xi * Sigma, or None when the variance is undefined."""
        return None

    def __repr__(self):
        return self.name


class Normal(DensityFamily):
    name = "normal"

    def log_g(self, u, q):
        u = _check_u(u)
        return -0.5 * q * math.log(2.0 * math.pi) - 0.5 * u

    def w_g(self, u, q):
        u = _check_u(u)
        return np.full_like(u, -0.5)

    def _psi_closed(self, q, l, k):
        if (l, k) == (2, 1):
            return q / 4.0
        if (l, k) == (2, 2):
            return q * (q + 2.0) / 4.0
        if (l, k) == (3, 2):
            return -q * (q + 2.0) / 8.0
        return -q * (q + 2.0) * (q + 4.0) / 8.0

    def _standard_draws(self, q, rng, size):
        return rng.standard_normal((size, q))

    def variance_scale(self, q=1):
        return 1.0


class StudentT(DensityFamily):
    """Multivariate Student t with fixed degrees of freedom nu > 0."""

    def __init__(self, nu):
        super().__init__()
        if not nu > 0:
            raise DomainError(f"Student t requires nu > 0, got {nu}")
        self.nu = float(nu)

    @property
    def name(self):
        return f"student-t(nu={self.nu:g})"

    def log_g(self, u, q):
        u = _check_u(u)
        nu = self.nu
        return (
            gammaln((nu + q) / 2.0)
            - gammaln(nu / 2.0)
            - 0.5 * q * math.log(math.pi * nu)
            - 0.5 * (nu + q) * np.log1p(u / nu)
        )

    def w_g(self, u, q):
        u = _check_u(u)
        return -(self.nu + q) / (2.0 * (self.nu + u))

    def _psi_closed(self, q, l, k):
        nu = self.nu
        if (l, k) == (2, 1):
            return q * (q + nu) / (4.0 * (q + nu + 2.0))
        if (l, k) == (2, 2):
            return q * (q + 2.0) * (q + nu) / (4.0 * (q + nu + 2.0))
        if (l, k) == (3, 2):
            return -q * (q + 2.0) * (q + nu) ** 2 / (8.0 * (q + 2.0 + nu) * (q + 4.0 + nu))
        return (
            -q * (q + 2.0) * (q + 4.0) * (q + nu) ** 2
            / (8.0 * (q + 2.0 + nu) * (q + 4.0 + nu))
        )

    def _standard_draws(self, q, rng, size):
        z = rng.standard_normal((size, q))
        w = rng.chisquare(self.nu, size) / self.nu
        return z / np.sqrt(w)[:, None]

    def variance_scale(self, q=1):
        if self.nu <= 2:
            return None
        return self.nu / (self.nu - 2.0)


class Cauchy(StudentT):
    """Multivariate Cauchy (Student t with nu = 1)."""

    def __init__(self):
        super().__init__(nu=1.0)

    @property
    def name(self):
        return "cauchy"

    def variance_scale(self, q=1):
        return None


class PowerExponential(DensityFamily):
    """Power exponential family with fixed shape lambda > 0.

    W_g is singular at u = 0 when lambda < 1, so evaluation there raises
    DomainError; iterative fitters clamp u away from zero instead.
    Radial psi moments for q = 1 additionally require lambda > 1/4.
    """

    def __init__(self, lam):
        super().__init__()
        if not lam > 0:
            raise DomainError(f"power exponential requires lambda > 0, got {lam}")
        self.lam = float(lam)

    @property
    def name(self):
        return f"power-exponential(lambda={self.lam:g})"

    def log_g(self, u, q):
        u = _check_u(u)
        lam = self.lam
        return (
            math.log(lam)
            + gammaln(q / 2.0)
            - gammaln(q / (2.0 * lam))
            - q / (2.0 * lam) * math.log(2.0)
            - 0.5 * q * math.log(math.pi)
            - 0.5 * u ** lam
        )

    def w_g(self, u, q):
        u = _check_u(u)
        lam = self.lam
        if lam < 1.0 and np.any(u == 0.0):
            raise DomainError(
                "W_g is singular at u = 0 for power exponential with lambda < 1"
            )
        return -0.5 * lam * u ** (lam - 1.0)

    def _check_side_condition(self, q):
        if q == 1 and not self.lam > 0.25:
            raise DomainError(
                f"power exponential psi moments with q = 1 require lambda > 1/4, "
                f"got lambda = {self.lam:g}"
            )

    def _psi_closed(self, q, l, k):
        self._check_side_condition(q)
        lam = self.lam
        denom = 2.0 ** (1.0 / lam) * math.gamma(q / (2.0 * lam))
        if (l, k) == (2, 1):
            return lam ** 2 * math.gamma((q - 2.0) / (2.0 * lam) + 2.0) / denom
        if (l, k) == (2, 2):
            return q * (2.0 * lam + q) / 4.0
        if (l, k) == (3, 2):
            return -(lam ** 3) * math.gamma((q - 2.0) / (2.0 * lam) + 3.0) / denom
        return -q * (2.0 * lam + q) * (4.0 * lam + q) / 8.0

    def _standard_draws(self, q, rng, size):
        # radius density ~ r^{q-1} exp(-r^{2 lam}/2): r = (2 G)^{1/(2 lam)},
        # G ~ Gamma(q / (2 lam))
        g = rng.gamma(q / (2.0 * self.lam), 1.0, size)
        r = (2.0 * g) ** (1.0 / (2.0 * self.lam))
        return self._radial_times_sphere(r, rng, q, size)

    def variance_scale(self, q=1):
        lam = self.lam
        return (
            2.0 ** (1.0 / lam)
            * math.exp(gammaln((q + 2.0) / (2.0 * lam)) - gammaln(q / (2.0 * lam)))
            / q
        )


class CustomFamily(DensityFamily):
    """User-supplied generating function g(u, q).

    ``w_g_fn`` is optional; when absent, W_g is a central difference of
    log g with step h = max(1e-6, 1e-6 u).  g must be the generating
    function of a proper density: positivity and the normalization
    integral are checked numerically once per block dimension.
    """

    def __init__(self, g_fn, w_g_fn=None, name="custom"):
        super().__init__()
        self._g_fn = g_fn
        self._w_g_fn = w_g_fn
        self._name = name
        self._validated = set()

    @property
    def name(self):
        return self._name

    def g(self, u, q):
        u = _check_u(u)
        return np.vectorize(lambda x: float(self._g_fn(x, q)))(u)[()]

    def log_g(self, u, q):
        g = self.g(u, q)
        if np.any(np.asarray(g) <= 0):
            raise DomainError("custom g(u) must be strictly positive")
        return np.log(g)

    def w_g(self, u, q):
        u = _check_u(u)
        if self._w_g_fn is not None:
            return np.vectorize(lambda x: float(self._w_g_fn(x, q)))(u)[()]

        def fd(x):
            h = max(1e-6, 1e-6 * x)
            if x >= h:
                return (self.log_g(x + h, q) - self.log_g(x - h, q)) / (2.0 * h)
            return (self.log_g(x + h, q) - self.log_g(x, q)) / h

        return np.vectorize(fd)(u)[()]

    def validate(self, q):
        """Check positivity and that g integrates to a proper density for this q."""
        if q in self._validated:
            return
        for u in (0.0, 1e-3, 0.5, 1.0, 5.0, 50.0):
            if not self.g(u, q) > 0:
                raise DomainError(f"custom g({u}, q={q}) is not positive")

        def integrand(t):
            if t <= 0.0 or t >= 1.0:
                return 0.0
            u = t / (1.0 - t)
            return u ** (q / 2.0 - 1.0) * float(self.g(u, q)) / (1.0 - t) ** 2

        val, err = quad(integrand, 0.0, 1.0, epsabs=_QUAD_EPSABS,
                        epsrel=_QUAD_EPSREL, limit=_QUAD_LIMIT)
        target = math.exp(gammaln(q / 2.0) - q / 2.0 * math.log(math.pi))
        if not np.isfinite(val) or abs(val - target) > 1e-4 * target:
            raise DomainError(
                f"custom g does not integrate to a proper q={q} density: "
                f"got {val:.6g}, expected {target:.6g}"
            )
        self._validated.add(q)

    def psi(self, q, l, k):
        self.validate(int(q))
        return super().psi(q, l, k)


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def w_g(family, u, q):
    """d log g(u)/du for the family at quadratic form u and block dimension q."""
    val = family.w_g(u, q)
    return float(val) if np.isscalar(u) or np.ndim(u) == 0 else val


def psi_moment(family, q, l, k):
    """psi_{(l,k)} = E(W_g(r)^l r^k), closed form when available else quadrature."""
    return family.psi(q, l, k)


def psi_moment_quadrature(family, q, l, k, epsabs=_QUAD_EPSABS,
                          epsrel=_QUAD_EPSREL, limit=_QUAD_LIMIT):
    """Radial-moment integral on s in (0, inf), transformed to (0, 1).

    psi = c_q * int_0^inf W_g(s^2)^l g(s^2) s^{q + 2k - 1} ds with
    c_q the unit-sphere surface area in R^q.
    """
    log_cq = math.log(2.0) + q / 2.0 * math.log(math.pi) - gammaln(q / 2.0)

    def integrand(t):
        if t <= 0.0 or t >= 1.0:
            return 0.0
        s = t / (1.0 - t)
        u = s * s
        w = float(family.w_g(u, q))
        log_mag = (
            float(family.log_g(u, q))
            + (q + 2.0 * k - 1.0) * math.log(s)
            - 2.0 * math.log1p(-t)
        )
        return (w ** l) * math.exp(log_mag)

    val, err, info = quad(integrand, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel,
                          limit=limit, full_output=True)[:3]
    if not np.isfinite(val):
        raise QuadratureError(f"psi({l},{k}) integral did not converge (q={q})")
    if err > max(epsabs, 1e-8 * abs(val)) * 100.0:
        raise QuadratureError(
            f"psi({l},{k}) quadrature error estimate {err:.3g} too large (q={q})"
        )
    return math.exp(log_cq) * val


def derived_constants(family, q):
    """psi moments and the derived constants c, c*, omega~, eta1, eta2."""
    return family.constants(q)


def sample(family, mu, sigma, rng, size=None):
    """Draw from El_q(mu, Sigma, g) for a built-in family."""
    return family.sample(mu, sigma, rng, size=size)
