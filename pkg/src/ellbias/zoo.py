"""Ready-made model builders with analytic first and second derivatives.

Four families of specifications, all returning a :class:`ModelSpec`:

* heteroscedastic nonlinear regression (univariate response),
* nonlinear mixed-effects models with marginal scale Z Sb Z' + R,
* errors-in-variables regression with known per-observation error scales
  (location and scale share the slope parameters, so no orthogonal split),
* log-symmetric regression for positive responses (fit on the log scale).

Every builder wires a starting-value heuristic and parameter names into
the model.  Analytic derivatives are unit-tested against central finite
differences.
"""

import numpy as np

from .exceptions import DimensionError, DomainError
from .linalg import symmetric_basis, unvech, vech
from .model import ModelSpec, ObservationBlock

__all__ = [
    "LINKS",
    "HeteroNonlinearSpec",
    "MixedEffectsSpec",
    "EivSpec",
    "LogSymmetricSpec",
    "build_hetero_nonlinear",
    "build_mixed_effects",
    "build_eiv",
    "build_log_symmetric",
    "build_logistic4",
    "logistic4_curve",
]


class _Link:
    def __init__(self, name, h, dh, d2h):
        self.name = name
        self.h, self.dh, self.d2h = h, dh, d2h


LINKS = {
    "exp": _Link("exp", np.exp, np.exp, np.exp),
    "identity": _Link("identity", lambda t: t, lambda t: 1.0, lambda t: 0.0),
}


def _resolve_link(link):
    if isinstance(link, _Link):
        return link
    try:
        return LINKS[link]
    except KeyError:
        raise DomainError(f"unknown scale link {link!r}; available: {sorted(LINKS)}")


# ---------------------------------------------------------------------------
# heteroscedastic nonlinear regression
# ---------------------------------------------------------------------------

class HeteroNonlinearSpec:
    """y_i = f(x_i, alpha) + e_i with Var-scale h(omega_i' gamma).

    f : (x_i, alpha) -> float, with optional gradient ``df`` (p1,) and
    Hessian ``d2f`` (p1, p1); finite differences are used when absent.
    ``omega`` defaults to a single intercept column (constant scale) and
    the link defaults to exp, which keeps the scale positive.
    """

    def __init__(self, f, p1, x, family, df=None, d2f=None, omega=None,
                 link="exp", alpha_names=None, gamma_names=None,
                 start=None):
        self.f, self.df, self.d2f = f, df, d2f
        self.p1 = int(p1)
        self.x = np.asarray(x, dtype=float)
        self.family = family
        n = self.x.shape[0]
        self.omega = (np.ones((n, 1)) if omega is None
                      else np.atleast_2d(np.asarray(omega, dtype=float)))
        if self.omega.shape[0] != n:
            raise DimensionError("omega must have one row per observation")
        self.link = _resolve_link(link)
        self.p2 = self.omega.shape[1]
        self.alpha_names = alpha_names or [f"alpha{j + 1}" for j in range(self.p1)]
        self.gamma_names = gamma_names or (
            ["sigma2"] if self.p2 == 1 and self.link.name == "identity"
            else [f"gamma{j + 1}" for j in range(self.p2)]
        )
        self.start = start


def build_hetero_nonlinear(spec, y=None):
    """ModelSpec for a HeteroNonlinearSpec; ``y`` may be bound later."""
    p1, p2 = spec.p1, spec.p2
    x, omega, link = spec.x, spec.omega, spec.link
    n = x.shape[0]
    if y is None:
        y = np.zeros(n)
    y = np.asarray(y, dtype=float)

    def mu_fn(th, i):
        return np.array([spec.f(x[i], th[:p1])])

    def sigma_fn(th, i):
        val = link.h(float(omega[i] @ th[p1:]))
        if not val > 0:
            raise DomainError(f"scale h(omega' gamma) = {val:g} <= 0 at obs {i}")
        return np.array([[val]])

    def grad(xi, alpha):
        if spec.df is not None:
            return np.asarray(spec.df(xi, alpha), dtype=float)
        g = np.zeros(p1)
        for r in range(p1):
            h = 1e-6 * (1.0 + abs(alpha[r]))
            ap, am = alpha.copy(), alpha.copy()
            ap[r] += h
            am[r] -= h
            g[r] = (spec.f(xi, ap) - spec.f(xi, am)) / (2.0 * h)
        return g

    def hess(xi, alpha):
        if spec.d2f is not None:
            return np.asarray(spec.d2f(xi, alpha), dtype=float)
        hmat = np.zeros((p1, p1))
        for s in range(p1):
            h = 1e-4 * (1.0 + abs(alpha[s]))
            ap, am = alpha.copy(), alpha.copy()
            ap[s] += h
            am[s] -= h
            hmat[s] = (grad(xi, ap) - grad(xi, am)) / (2.0 * h)
        return 0.5 * (hmat + hmat.T)

    def dmu(th, i, r):
        if r >= p1:
            return np.zeros(1)
        return np.array([grad(x[i], th[:p1])[r]])

    def d2mu(th, i, s, r):
        if s >= p1 or r >= p1:
            return np.zeros(1)
        return np.array([hess(x[i], th[:p1])[s, r]])

    def dsigma(th, i, r):
        if r < p1:
            return np.zeros((1, 1))
        eta = float(omega[i] @ th[p1:])
        return np.array([[link.dh(eta) * omega[i, r - p1]]])

    def d2sigma(th, i, s, r):
        if s < p1 or r < p1:
            return np.zeros((1, 1))
        eta = float(omega[i] @ th[p1:])
        return np.array([[link.d2h(eta) * omega[i, s - p1] * omega[i, r - p1]]])

    def start_heuristic(model):
        if spec.start is not None:
            return np.asarray(spec.start, dtype=float)
        from scipy.optimize import least_squares

        yy = np.array([b.y[0] for b in model.blocks])

        def resid(alpha):
            return yy - np.array([spec.f(x[i], alpha) for i in range(len(yy))])

        ls = least_squares(resid, np.ones(p1), method="lm", max_nfev=400 * p1)
        r2 = np.maximum(resid(ls.x) ** 2, 1e-8)
        xi = model.family.variance_scale(1) or 1.0
        if link.name == "exp":
            gamma = np.linalg.lstsq(omega, np.log(r2 / xi), rcond=None)[0]
        else:
            gamma = np.linalg.lstsq(omega, r2 / xi, rcond=None)[0]
        return np.concatenate([ls.x, gamma])

    blocks = [ObservationBlock(y=np.array([y[i]]), x=np.atleast_1d(x[i]),
                               w=omega[i]) for i in range(n)]
    return ModelSpec(
        p=p1 + p2, blocks=blocks, family=spec.family,
        mu_fn=mu_fn, sigma_fn=sigma_fn, dmu=dmu, d2mu=d2mu,
        dsigma=dsigma, d2sigma=d2sigma, orthogonal_split=(p1, p2),
        theta_names=spec.alpha_names + spec.gamma_names,
        start_heuristic=start_heuristic,
    )


# ---------------------------------------------------------------------------
# four-parameter logistic-type decay curve (dose-response style)
# ---------------------------------------------------------------------------

def logistic4_curve(xi, a):
    """mu = a1 + a2 / (1 + a3 * x^a4), for x > 0."""
    t = xi ** a[3]
    return a[0] + a[1] / (1.0 + a[2] * t)


def _logistic4_grad(xi, a):
    t = xi ** a[3]
    den = 1.0 + a[2] * t
    lx = np.log(xi)
    return np.array([
        1.0,
        1.0 / den,
        -a[1] * t / den ** 2,
        -a[1] * a[2] * t * lx / den ** 2,
    ])


def _logistic4_hess(xi, a):
    t = xi ** a[3]
    den = 1.0 + a[2] * t
    lx = np.log(xi)
    h = np.zeros((4, 4))
    h[1, 2] = h[2, 1] = -t / den ** 2
    h[1, 3] = h[3, 1] = -a[2] * t * lx / den ** 2
    h[2, 2] = 2.0 * a[1] * t ** 2 / den ** 3
    h[2, 3] = h[3, 2] = -a[1] * t * lx * (1.0 - a[2] * t) / den ** 3
    h[3, 3] = -a[1] * a[2] * t * lx ** 2 * (1.0 - a[2] * t) / den ** 3
    return h


def build_logistic4(x, family, y=None, start=None):
    """Four-parameter decay curve with constant scale sigma2 (p = 5).

    theta = (alpha1..alpha4, sigma2); x must be strictly positive.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("logistic4 covariate x must be strictly positive")
    spec = HeteroNonlinearSpec(
        f=logistic4_curve, df=_logistic4_grad, d2f=_logistic4_hess,
        p1=4, x=x, family=family, link="identity",
        alpha_names=["alpha1", "alpha2", "alpha3", "alpha4"],
        gamma_names=["sigma2"], start=start,
    )
    mdl = build_hetero_nonlinear(spec, y=y)
    if start is None:
        # least-squares from a curve-shape guess; the generic ones(p1) start
        # sits in a flat region of this curve
        def heuristic(model):
            yy = np.array([b.y[0] for b in model.blocks])
            xx = np.array([b.x[0] for b in model.blocks])
            order = np.argsort(xx)
            tail = max(2, len(yy) // 5)
            a1 = float(np.mean(yy[order[-tail:]]))
            a2 = float(np.mean(yy[order[:tail]]) - a1)
            a0 = np.array([a1, a2 if abs(a2) > 1e-8 else 1.0, 0.5, 1.0])
            from scipy.optimize import least_squares
            resid = lambda a: yy - np.array([logistic4_curve(xi, a) for xi in xx])
            ls = least_squares(resid, a0, method="lm", max_nfev=2000)
            xi_var = model.family.variance_scale(1) or 1.0
            s2 = max(float(np.mean(resid(ls.x) ** 2)) / xi_var, 1e-8)
            return np.concatenate([ls.x, [s2]])

        mdl.start_heuristic = heuristic
    return mdl


# ---------------------------------------------------------------------------
# nonlinear mixed effects
# ---------------------------------------------------------------------------

class MixedEffectsSpec:
    """Marginal model mu_i(x_i, alpha), Sigma_i = Z_i Sb(g1) Z_i' + R_i(g2).

    Sb is parameterized by its half-vectorization (r_dim x r_dim, PD checked
    at evaluation); the residual scale R_i is either isotropic sigma2 I
    (``resid="iso"``) or a shared vech-parameterized matrix (``resid="vech"``,
    equal block sizes).  Both Sigma pieces are linear in the parameters, so
    all second derivatives of Sigma vanish.
    """

    def __init__(self, mu, p1, x, z, family, dmu=None, d2mu=None, resid="iso",
                 alpha_names=None, start=None):
        self.mu, self.dmu, self.d2mu = mu, dmu, d2mu
        self.p1 = int(p1)
        self.x = list(x)
        self.z = [np.atleast_2d(np.asarray(zi, dtype=float)) for zi in z]
        self.family = family
        if resid not in ("iso", "vech"):
            raise DomainError(f"resid must be 'iso' or 'vech', got {resid!r}")
        self.resid = resid
        self.r_dim = self.z[0].shape[1] if self.z[0].size else 0
        for zi in self.z:
            if zi.size and zi.shape[1] != self.r_dim:
                raise DimensionError("all Z_i must have the same column count")
        self.alpha_names = alpha_names or [f"alpha{j + 1}" for j in range(self.p1)]
        self.start = start


def build_mixed_effects(spec, y=None):
    p1 = spec.p1
    r = spec.r_dim
    p2 = r * (r + 1) // 2
    qs = [zi.shape[0] for zi in spec.z]
    if spec.resid == "iso":
        p3 = 1
    else:
        if len(set(qs)) != 1:
            raise DimensionError("resid='vech' needs equal block sizes q_i")
        p3 = qs[0] * (qs[0] + 1) // 2
    p = p1 + p2 + p3
    basis_b = symmetric_basis(r) if r else []
    basis_r = symmetric_basis(qs[0]) if spec.resid == "vech" else None
    n = len(spec.z)
    if y is None:
        y = [np.zeros(q) for q in qs]

    def mu_fn(th, i):
        return np.asarray(spec.mu(spec.x[i], th[:p1]), dtype=float)

    def sigma_fn(th, i):
        q = qs[i]
        if spec.resid == "iso":
            r_i = th[p1 + p2] * np.eye(q)
        else:
            r_i = unvech(th[p1 + p2:], q)
        if r:
            sb = unvech(th[p1:p1 + p2], r)
            return spec.z[i] @ sb @ spec.z[i].T + r_i
        return r_i

    def dmu(th, i, rr):
        if rr >= p1:
            return np.zeros(qs[i])
        if spec.dmu is not None:
            return np.asarray(spec.dmu(spec.x[i], th[:p1], rr), dtype=float)
        h = 1e-6 * (1.0 + abs(th[rr]))
        tp, tm = th.copy(), th.copy()
        tp[rr] += h
        tm[rr] -= h
        return (mu_fn(tp, i) - mu_fn(tm, i)) / (2.0 * h)

    def d2mu(th, i, s, rr):
        if s >= p1 or rr >= p1:
            return np.zeros(qs[i])
        if spec.d2mu is not None:
            return np.asarray(spec.d2mu(spec.x[i], th[:p1], s, rr), dtype=float)
        h = 1e-4 * (1.0 + abs(th[s]))
        tp, tm = th.copy(), th.copy()
        tp[s] += h
        tm[s] -= h
        return (dmu(tp, i, rr) - dmu(tm, i, rr)) / (2.0 * h)

    def dsigma(th, i, rr):
        q = qs[i]
        if rr < p1:
            return np.zeros((q, q))
        if rr < p1 + p2:
            e = basis_b[rr - p1]
            return spec.z[i] @ e @ spec.z[i].T
        if spec.resid == "iso":
            return np.eye(q)
        return basis_r[rr - p1 - p2]

    def d2sigma(th, i, s, rr):
        q = qs[i]
        return np.zeros((q, q))

    def start_heuristic(model):
        if spec.start is not None:
            return np.asarray(spec.start, dtype=float)
        from scipy.optimize import least_squares

        def resid(alpha):
            th = np.concatenate([alpha, np.ones(p2 + p3)])
            return np.concatenate([model.blocks[i].y - mu_fn(th, i)
                                   for i in range(model.n)])

        ls = least_squares(resid, np.ones(p1), method="lm", max_nfev=400 * p1)
        th0 = np.concatenate([ls.x, np.ones(p2 + p3)])
        zres = [model.blocks[i].y - mu_fn(th0, i) for i in range(model.n)]
        xi = model.family.variance_scale(qs[0]) or 1.0
        pooled = float(np.mean([zz @ zz / len(zz) for zz in zres])) / xi
        g1 = vech(0.1 * pooled * np.eye(r)) if r else np.zeros(0)
        if spec.resid == "iso":
            g2 = np.array([0.9 * pooled])
        else:
            g2 = vech(0.9 * pooled * np.eye(qs[0]))
        return np.concatenate([ls.x, g1, g2])

    names = list(spec.alpha_names)
    names += [f"sb{k + 1}" for k in range(p2)]
    names += (["sigma2"] if spec.resid == "iso"
              else [f"rr{k + 1}" for k in range(p3)])
    blocks = [ObservationBlock(y=np.asarray(y[i], dtype=float)) for i in range(n)]
    return ModelSpec(
        p=p, blocks=blocks, family=spec.family, mu_fn=mu_fn, sigma_fn=sigma_fn,
        dmu=dmu, d2mu=d2mu, dsigma=dsigma, d2sigma=d2sigma,
        orthogonal_split=(p1, p2 + p3), theta_names=names,
        start_heuristic=start_heuristic,
    )


# ---------------------------------------------------------------------------
# errors-in-variables
# ---------------------------------------------------------------------------

class EivSpec:
    """Observed (X1_i, X2_i) with additive measurement errors of known scale.

    X1 (n, v) responses, X2 (n, m) covariates; tau1/tau2 are the known error
    scale matrices per observation ((n, v, v) and (n, m, m), or vectors when
    v = m = 1).  theta = (beta0, vec(beta1), mu_x2, vech(Sigma_x2),
    vech(Sigma_q)); beta1 appears in both the location and the scale, so
    there is no orthogonal split.
    """

    def __init__(self, x1, x2, tau1, tau2, family):
        self.x1 = np.atleast_2d(np.asarray(x1, dtype=float).T).T
        self.x2 = np.atleast_2d(np.asarray(x2, dtype=float).T).T
        if self.x1.ndim != 2 or self.x2.ndim != 2:
            raise DimensionError("x1 and x2 must be (n, v) and (n, m) arrays")
        n, v = self.x1.shape
        m = self.x2.shape[1]
        if self.x2.shape[0] != n:
            raise DimensionError("x1 and x2 must have the same number of rows")
        self.n, self.v, self.m = n, v, m
        self.tau1 = self._expand_tau(tau1, v, "tau1")
        self.tau2 = self._expand_tau(tau2, m, "tau2")
        self.family = family

    def _expand_tau(self, tau, d, what):
        tau = np.asarray(tau, dtype=float)
        if tau.ndim == 1 and d == 1:
            tau = tau.reshape(-1, 1, 1)
        if tau.shape != (self.n, d, d):
            raise DimensionError(f"{what} must have shape ({self.n},{d},{d})")
        return tau


def build_eiv(spec):
    v, m, n = spec.v, spec.m, spec.n
    q = v + m
    p_b0, p_b1, p_mu = v, v * m, m
    p_sx = m * (m + 1) // 2
    p_sq = v * (v + 1) // 2
    p = p_b0 + p_b1 + p_mu + p_sx + p_sq
    o_b1 = p_b0
    o_mu = o_b1 + p_b1
    o_sx = o_mu + p_mu
    o_sq = o_sx + p_sx
    basis_x = symmetric_basis(m)
    basis_q = symmetric_basis(v)

    def parts(th):
        beta0 = th[:p_b0]
        beta1 = th[o_b1:o_mu].reshape((v, m), order="F")
        mu_x2 = th[o_mu:o_sx]
        sig_x = unvech(th[o_sx:o_sq], m)
        sig_q = unvech(th[o_sq:], v)
        return beta0, beta1, mu_x2, sig_x, sig_q

    def mu_fn(th, i):
        beta0, beta1, mu_x2, _, _ = parts(th)
        return np.concatenate([beta0 + beta1 @ mu_x2, mu_x2])

    def sigma_fn(th, i):
        _, beta1, _, sig_x, sig_q = parts(th)
        out = np.zeros((q, q))
        out[:v, :v] = beta1 @ sig_x @ beta1.T + sig_q + spec.tau1[i]
        out[:v, v:] = beta1 @ sig_x
        out[v:, :v] = out[:v, v:].T
        out[v:, v:] = sig_x + spec.tau2[i]
        return out

    def _e_ab(r):
        # elementary (v x m) matrix for the r-th entry of vec(beta1)
        k = r - o_b1
        a, b = k % v, k // v
        e = np.zeros((v, m))
        e[a, b] = 1.0
        return e

    def dmu(th, i, r):
        _, beta1, mu_x2, _, _ = parts(th)
        out = np.zeros(q)
        if r < p_b0:
            out[r] = 1.0
        elif r < o_mu:
            out[:v] = _e_ab(r) @ mu_x2
        elif r < o_sx:
            b = r - o_mu
            out[:v] = beta1[:, b]
            out[v + b] = 1.0
        return out

    def d2mu(th, i, s, r):
        out = np.zeros(q)
        lo, hi = min(s, r), max(s, r)
        if o_b1 <= lo < o_mu and o_mu <= hi < o_sx:
            e = _e_ab(lo)
            out[:v] = e[:, hi - o_mu]
        return out

    def dsigma(th, i, r):
        _, beta1, _, sig_x, _ = parts(th)
        out = np.zeros((q, q))
        if o_b1 <= r < o_mu:
            e = _e_ab(r)
            tl = e @ sig_x @ beta1.T
            out[:v, :v] = tl + tl.T
            out[:v, v:] = e @ sig_x
            out[v:, :v] = out[:v, v:].T
        elif o_sx <= r < o_sq:
            s_j = basis_x[r - o_sx]
            out[:v, :v] = beta1 @ s_j @ beta1.T
            out[:v, v:] = beta1 @ s_j
            out[v:, :v] = out[:v, v:].T
            out[v:, v:] = s_j
        elif r >= o_sq:
            out[:v, :v] = basis_q[r - o_sq]
        return out

    def d2sigma(th, i, s, r):
        _, beta1, _, sig_x, _ = parts(th)
        out = np.zeros((q, q))
        lo, hi = min(s, r), max(s, r)
        if o_b1 <= lo < o_mu and o_b1 <= hi < o_mu:
            e1, e2 = _e_ab(lo), _e_ab(hi)
            tl = e1 @ sig_x @ e2.T
            out[:v, :v] = tl + tl.T
        elif o_b1 <= lo < o_mu and o_sx <= hi < o_sq:
            e = _e_ab(lo)
            s_j = basis_x[hi - o_sx]
            tl = e @ s_j @ beta1.T
            out[:v, :v] = tl + tl.T
            out[:v, v:] = e @ s_j
            out[v:, :v] = out[:v, v:].T
        return out

    def start_heuristic(model):
        # moment start from the model's own blocks (robust to subsetting)
        ys = np.vstack([b.y for b in model.blocks])
        taus = np.vstack([b.w for b in model.blocks])
        x1, x2 = ys[:, :v], ys[:, v:]
        t1_bar = taus[:, :v * v].mean(axis=0).reshape(v, v)
        t2_bar = taus[:, v * v:].mean(axis=0).reshape(m, m)
        mu2 = x2.mean(axis=0)
        xi = spec.family.variance_scale(q) or 1.0
        cov_x2 = np.atleast_2d(np.cov(x2.T, ddof=1)).reshape(m, m) / xi
        sig_x = _floor_pd(cov_x2 - t2_bar, 0.1 * np.trace(cov_x2) / m)
        cov_12 = np.atleast_2d(np.cov(np.hstack([x1, x2]).T, ddof=1))[:v, v:] / xi
        beta1 = cov_12 @ np.linalg.inv(sig_x)
        beta0 = x1.mean(axis=0) - beta1 @ mu2
        cov_x1 = np.atleast_2d(np.cov(x1.T, ddof=1)).reshape(v, v) / xi
        sig_q = _floor_pd(cov_x1 - beta1 @ sig_x @ beta1.T - t1_bar,
                          0.1 * np.trace(cov_x1) / v)
        return np.concatenate([beta0, beta1.reshape(-1, order="F"), mu2,
                               vech(sig_x), vech(sig_q)])

    names = [f"beta0_{a + 1}" for a in range(v)]
    names += [f"beta1_{a + 1}{b + 1}" for b in range(m) for a in range(v)]
    names += [f"mu_x2_{b + 1}" for b in range(m)]
    names += [f"sigma_x2_{k + 1}" for k in range(p_sx)]
    names += [f"sigma_q_{k + 1}" for k in range(p_sq)]
    if v == 1 and m == 1:
        names = ["beta0", "beta1", "mu_x2", "sigma_x2", "sigma_q"]
    blocks = [ObservationBlock(
        y=np.concatenate([spec.x1[i], spec.x2[i]]),
        w=np.concatenate([spec.tau1[i].ravel(), spec.tau2[i].ravel()]),
    ) for i in range(n)]
    return ModelSpec(
        p=p, blocks=blocks, family=spec.family, mu_fn=mu_fn, sigma_fn=sigma_fn,
        dmu=dmu, d2mu=d2mu, dsigma=dsigma, d2sigma=d2sigma,
        orthogonal_split=None, theta_names=names,
        start_heuristic=start_heuristic,
    )


def _floor_pd(mat, floor):
    """Push eigenvalues of a symmetric matrix up to at least ``floor``."""
    w, vex = np.linalg.eigh(0.5 * (mat + mat.T))
    w = np.maximum(w, floor)
    return vex @ np.diag(w) @ vex.T


# ---------------------------------------------------------------------------
# log-symmetric regression
# ---------------------------------------------------------------------------

class LogSymmetricSpec:
    """Positive response T with log T elliptical: median eta, dispersion phi.

    ``eta`` is either the string "exp-linear" (eta = exp(x' alpha), so the
    log-scale location is linear) or a positive-valued callable
    (x_i, alpha) -> float with optional ``deta``/``d2eta``.  The dispersion
    is h(omega' gamma) through the same link plumbing as the
    heteroscedastic builder.
    """

    def __init__(self, t, x, family, eta="exp-linear", deta=None, d2eta=None,
                 p1=None, omega=None, link="exp", start=None):
        self.t = np.asarray(t, dtype=float)
        if np.any(self.t <= 0):
            raise DomainError("log-symmetric responses must be strictly positive")
        self.x = np.atleast_2d(np.asarray(x, dtype=float).T).T
        self.family = family
        self.eta, self.deta, self.d2eta = eta, deta, d2eta
        if eta == "exp-linear":
            self.p1 = self.x.shape[1]
        else:
            if p1 is None:
                raise DomainError("p1 is required for a callable eta")
            self.p1 = int(p1)
        self.omega = omega
        self.link = link
        self.start = start


def build_log_symmetric(spec):
    y = np.log(spec.t)
    x = spec.x
    p1 = spec.p1

    if spec.eta == "exp-linear":
        f = lambda xi, a: float(xi @ a)
        df = lambda xi, a: np.asarray(xi, dtype=float)
        d2f = lambda xi, a: np.zeros((p1, p1))
    else:
        eta, deta_u, d2eta_u = spec.eta, spec.deta, spec.d2eta

        def f(xi, a):
            val = float(eta(xi, a))
            if not val > 0:
                raise DomainError("eta(x, alpha) must be positive")
            return float(np.log(val))

        if deta_u is not None:
            def df(xi, a):
                return np.asarray(deta_u(xi, a), dtype=float) / float(eta(xi, a))
        else:
            df = None
        if deta_u is not None and d2eta_u is not None:
            def d2f(xi, a):
                e = float(eta(xi, a))
                g = np.asarray(deta_u(xi, a), dtype=float)
                return np.asarray(d2eta_u(xi, a), dtype=float) / e - np.outer(g, g) / e ** 2
        else:
            d2f = None

    hspec = HeteroNonlinearSpec(
        f=f, df=df, d2f=d2f, p1=p1, x=x, family=spec.family,
        omega=spec.omega, link=spec.link, start=spec.start,
    )
    return build_hetero_nonlinear(hspec, y=y)
