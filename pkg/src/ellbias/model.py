"""General elliptical regression model: per-observation location/scale maps
with derivatives, block matrices, log-likelihood, score and Fisher information.

The model is Y_i ~ El_{q_i}(mu_i(theta), Sigma_i(theta)) independently over i,
with user-supplied callbacks for mu_i, Sigma_i and (optionally) their first
and second derivatives.  Missing derivative callbacks fall back to central
finite differences.

Per observation the stacked derivative block is F_i = (D_i; V_i) with
D_i columns dmu_i/dtheta_r and V_i columns vec(dSigma_i/dtheta_r); the
weight blocks are H_i = block-diag(Sigma_i, 2 Sigma_i x Sigma_i)^{-1} and
the distribution matrix M_i built from the radial psi moments.  The score
is U = F' H s and the Fisher information K = F' (H M H) F.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag, cho_solve

from .exceptions import DimensionError, DomainError, LinAlgError, RankWarning
from .linalg import chol_logdet, chol_pd, inv_from_chol, kron, vec

__all__ = [
    "ObservationBlock",
    "ModelSpec",
    "BlockMatrices",
    "log_likelihood",
    "assemble_blocks",
    "score",
    "score_many",
    "fisher_information",
    "validate_derivatives",
]

# Kronecker blocks are materialized densely; tiny q_i only.
_MAX_BLOCK_DIM = 8

# Lower clamp on the quadratic form before evaluating W_g inside fitters
# (power exponential with lambda < 1 is singular at u = 0).
_U_CLAMP = 1e-12

_FD_STEP1 = 1e-6
_FD_STEP2 = 1e-4


@dataclass(frozen=True)
class ObservationBlock:
    """One observed response vector with its covariate vectors."""

    y: np.ndarray
    x: np.ndarray | None = None
    w: np.ndarray | None = None

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if not np.all(np.isfinite(y)):
            raise DimensionError("observation y contains non-finite values")
        object.__setattr__(self, "y", y)

    @property
    def q(self):
        return self.y.size


def _as_vector(v, q, what):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (q,):
        raise DimensionError(f"{what} must have shape ({q},), got {v.shape}")
    return v


def _as_matrix(m, q, what):
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape != (q, q):
        raise DimensionError(f"{what} must have shape ({q},{q}), got {m.shape}")
    return m


class ModelSpec:
    """Immutable specification of one elliptical regression model.

    Parameters
    ----------
    p : int
        Number of unknown parameters.
    blocks : sequence of ObservationBlock
    family : DensityFamily
    mu_fn, sigma_fn : callables (theta, i) -> location vector / scale matrix
    dmu, d2mu, dsigma, d2sigma : optional derivative callbacks
        dmu(theta, i, r), d2mu(theta, i, s, r), dsigma(theta, i, r),
        d2sigma(theta, i, s, r).  Finite differences are used when absent.
    orthogonal_split : optional (p1, p2)
        Declares theta = (theta1, theta2) with mu depending only on theta1
        and Sigma only on theta2.
    theta_names : optional list of parameter names for reports.
    start_heuristic : optional callable model -> theta used when no start
        value is supplied to a fitter.
    """

    def __init__(self, p, blocks, family, mu_fn, sigma_fn, dmu=None, d2mu=None,
                 dsigma=None, d2sigma=None, orthogonal_split=None,
                 theta_names=None, start_heuristic=None):
        self.p = int(p)
        self.blocks = list(blocks)
        if not self.blocks:
            raise DimensionError("model needs at least one observation")
        for b in self.blocks:
            if b.q > _MAX_BLOCK_DIM:
                raise DimensionError(
                    f"block dimension {b.q} > {_MAX_BLOCK_DIM}: dense Kronecker "
                    "products are only materialized for small blocks"
                )
        self.family = family
        self.mu_fn = mu_fn
        self.sigma_fn = sigma_fn
        self._dmu = dmu
        self._d2mu = d2mu
        self._dsigma = dsigma
        self._d2sigma = d2sigma
        if orthogonal_split is not None:
            p1, p2 = orthogonal_split
            if p1 + p2 != self.p:
                raise DimensionError(
                    f"orthogonal split {orthogonal_split} does not sum to p={self.p}"
                )
            orthogonal_split = (int(p1), int(p2))
        self.orthogonal_split = orthogonal_split
        if theta_names is not None and len(theta_names) != self.p:
            raise DimensionError("theta_names length must equal p")
        self.theta_names = list(theta_names) if theta_names is not None else None
        self.start_heuristic = start_heuristic

    # -- basic accessors ----------------------------------------------------
    @property
    def n(self):
        return len(self.blocks)

    def q_of(self, i):
        return self.blocks[i].q

    def mu(self, theta, i):
        return _as_vector(self.mu_fn(theta, i), self.q_of(i), f"mu_{i}")

    def sigma(self, theta, i):
        s = _as_matrix(self.sigma_fn(theta, i), self.q_of(i), f"Sigma_{i}")
        if not np.allclose(s, s.T, rtol=1e-10, atol=1e-12):
            raise DomainError(f"Sigma_{i} is not symmetric")
        return s

    # -- first derivatives ----------------------------------------------------
    def dmu(self, theta, i, r):
        q = self.q_of(i)
        if self._dmu is not None:
            return _as_vector(self._dmu(theta, i, r), q, f"dmu_{i}({r})")
        h = _FD_STEP1 * (1.0 + abs(theta[r]))
        tp, tm = theta.copy(), theta.copy()
        tp[r] += h
        tm[r] -= h
        return (self.mu(tp, i) - self.mu(tm, i)) / (2.0 * h)

    def dsigma(self, theta, i, r):
        q = self.q_of(i)
        if self._dsigma is not None:
            return _as_matrix(self._dsigma(theta, i, r), q, f"dSigma_{i}({r})")
        h = _FD_STEP1 * (1.0 + abs(theta[r]))
        tp, tm = theta.copy(), theta.copy()
        tp[r] += h
        tm[r] -= h
        return (self.sigma(tp, i) - self.sigma(tm, i)) / (2.0 * h)

    # -- second derivatives ---------------------------------------------------
    def d2mu(self, theta, i, s, r):
        q = self.q_of(i)
        if self._d2mu is not None:
            return _as_vector(self._d2mu(theta, i, s, r), q, f"d2mu_{i}({s},{r})")
        h = _FD_STEP2 * (1.0 + abs(theta[s]))
        tp, tm = theta.copy(), theta.copy()
        tp[s] += h
        tm[s] -= h
        if self._dmu is not None:
            return (self.dmu(tp, i, r) - self.dmu(tm, i, r)) / (2.0 * h)
        hr = _FD_STEP2 * (1.0 + abs(theta[r]))
        pp, pm, mp, mm = (theta.copy() for _ in range(4))
        pp[s] += h; pp[r] += hr
        pm[s] += h; pm[r] -= hr
        mp[s] -= h; mp[r] += hr
        mm[s] -= h; mm[r] -= hr
        return (self.mu(pp, i) - self.mu(pm, i) - self.mu(mp, i) + self.mu(mm, i)) / (4.0 * h * hr)

    def d2sigma(self, theta, i, s, r):
        q = self.q_of(i)
        if self._d2sigma is not None:
            return _as_matrix(self._d2sigma(theta, i, s, r), q, f"d2Sigma_{i}({s},{r})")
        h = _FD_STEP2 * (1.0 + abs(theta[s]))
        tp, tm = theta.copy(), theta.copy()
        tp[s] += h
        tm[s] -= h
        if self._dsigma is not None:
            return (self.dsigma(tp, i, r) - self.dsigma(tm, i, r)) / (2.0 * h)
        hr = _FD_STEP2 * (1.0 + abs(theta[r]))
        pp, pm, mp, mm = (theta.copy() for _ in range(4))
        pp[s] += h; pp[r] += hr
        pm[s] += h; pm[r] -= hr
        mp[s] -= h; mp[r] += hr
        mm[s] -= h; mm[r] -= hr
        return (self.sigma(pp, i) - self.sigma(pm, i) - self.sigma(mp, i)
                + self.sigma(mm, i)) / (4.0 * h * hr)

    # -- derived models ---------------------------------------------------------
    def with_data(self, ys):
        """Same design, new responses. ``ys`` is a list of per-block vectors."""
        if len(ys) != self.n:
            raise DimensionError(f"expected {self.n} response blocks, got {len(ys)}")
        blocks = [ObservationBlock(y=np.asarray(y, dtype=float), x=b.x, w=b.w)
                  for y, b in zip(ys, self.blocks)]
        return self._clone(blocks, None)

    def subset(self, indices):
        """Model restricted to the given observation indices."""
        indices = list(indices)
        blocks = [self.blocks[i] for i in indices]
        return self._clone(blocks, indices)

    def _clone(self, blocks, index_map):
        def remap(fn, nargs):
            if fn is None or index_map is None:
                return fn
            if nargs == 2:
                return lambda theta, j: fn(theta, index_map[j])
            if nargs == 3:
                return lambda theta, j, r: fn(theta, index_map[j], r)
            return lambda theta, j, s, r: fn(theta, index_map[j], s, r)

        out = ModelSpec(
            p=self.p,
            blocks=blocks,
            family=self.family,
            mu_fn=remap(self.mu_fn, 2),
            sigma_fn=remap(self.sigma_fn, 2),
            dmu=remap(self._dmu, 3),
            d2mu=remap(self._d2mu, 4),
            dsigma=remap(self._dsigma, 3),
            d2sigma=remap(self._d2sigma, 4),
            orthogonal_split=self.orthogonal_split,
            theta_names=self.theta_names,
            start_heuristic=self.start_heuristic,
        )
        return out


# ---------------------------------------------------------------------------
# block assembly
# ---------------------------------------------------------------------------

@dataclass
class _Design:
    """Data-independent parts of the block assembly at a fixed theta."""

    theta: np.ndarray
    mu: list
    sigma: list
    chol: list
    sigma_inv: list
    logdet: np.ndarray
    D: list
    V: list
    F: list
    H: list
    M: list
    Htilde: list
    consts: list  # PsiMoments per observation


@dataclass
class BlockMatrices:
    """Per-observation and stacked matrices of the score/information display."""

    theta: np.ndarray
    design: _Design
    z: list
    u: np.ndarray
    v: np.ndarray
    s: list
    F_stack: np.ndarray
    s_stack: np.ndarray
    rank_F: int

    # design views
    @property
    def mu(self):
        return self.design.mu

    @property
    def sigma(self):
        return self.design.sigma

    @property
    def sigma_inv(self):
        return self.design.sigma_inv

    @property
    def logdet(self):
        return self.design.logdet

    @property
    def D(self):
        return self.design.D

    @property
    def V(self):
        return self.design.V

    @property
    def F(self):
        return self.design.F

    @property
    def H(self):
        return self.design.H

    @property
    def M(self):
        return self.design.M

    @property
    def Htilde(self):
        return self.design.Htilde

    @property
    def consts(self):
        return self.design.consts

    @property
    def n(self):
        return len(self.z)

    # full block-diagonal forms, for inspection and tests
    def full_H(self):
        return block_diag(*self.design.H)

    def full_M(self):
        return block_diag(*self.design.M)

    def full_Htilde(self):
        return block_diag(*self.design.Htilde)

    def score(self):
        """U = F' H s accumulated per observation."""
        u = np.zeros(self.theta.size)
        for F_i, H_i, s_i in zip(self.design.F, self.design.H, self.s):
            u += F_i.T @ (H_i @ s_i)
        return u

    def loglik(self, model):
        """Log-likelihood from the already-evaluated logdets and u_i."""
        total = -0.5 * float(np.sum(self.design.logdet))
        for i in range(self.n):
            total += float(model.family.log_g(self.u[i], model.q_of(i)))
        return total

    def information(self):
        """K = F' (H M H) F accumulated per observation."""
        p = self.theta.size
        k = np.zeros((p, p))
        for F_i, Ht_i in zip(self.design.F, self.design.Htilde):
            k += F_i.T @ Ht_i @ F_i
        return 0.5 * (k + k.T)


def _design_at(model, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.p,):
        raise DimensionError(f"theta must have shape ({model.p},), got {theta.shape}")
    p = model.p
    mus, sigmas, chols, sinvs, logdets = [], [], [], [], []
    Ds, Vs, Fs, Hs, Ms, Hts, consts = [], [], [], [], [], [], []
    for i in range(model.n):
        q = model.q_of(i)
        mu_i = model.mu(theta, i)
        sig_i = model.sigma(theta, i)
        low = chol_pd(sig_i)
        sinv = inv_from_chol(low)
        sinv = 0.5 * (sinv + sinv.T)

        D_i = np.column_stack([model.dmu(theta, i, r) for r in range(p)])
        V_i = np.column_stack([vec(model.dsigma(theta, i, r)) for r in range(p)])
        F_i = np.vstack([D_i, V_i])

        kk_inv = 0.5 * kron(sinv, sinv)
        H_i = block_diag(sinv, kk_inv)

        cst = model.family.constants(q)
        m1 = cst.m1
        M_i = block_diag(m1 * sig_i, 2.0 * cst.c * kron(sig_i, sig_i))
        if cst.c != 1.0:
            vs = vec(sig_i)
            M_i[q:, q:] += (cst.c - 1.0) * np.outer(vs, vs)

        Ht_i = block_diag(m1 * sinv, cst.c * kk_inv)
        coef = (cst.c - 1.0) / 4.0
        if coef != 0.0:
            vsi = vec(sinv)
            Ht_i[q:, q:] += coef * np.outer(vsi, vsi)

        mus.append(mu_i)
        sigmas.append(sig_i)
        chols.append(low)
        sinvs.append(sinv)
        logdets.append(chol_logdet(low))
        Ds.append(D_i)
        Vs.append(V_i)
        Fs.append(F_i)
        Hs.append(H_i)
        Ms.append(M_i)
        Hts.append(Ht_i)
        consts.append(cst)
    return _Design(theta=theta, mu=mus, sigma=sigmas, chol=chols, sigma_inv=sinvs,
                   logdet=np.array(logdets), D=Ds, V=Vs, F=Fs, H=Hs, M=Ms,
                   Htilde=Hts, consts=consts)


def assemble_blocks(model, theta, design=None, check_rank=True):
    """Evaluate all per-observation block matrices at theta.

    Returns a :class:`BlockMatrices`.  A precomputed design (from a previous
    call at the same theta) may be passed to skip the data-independent part.
    """
    if design is None:
        design = _design_at(model, theta)
    theta = design.theta
    zs, us, vs, ss = [], [], [], []
    for i in range(model.n):
        q = model.q_of(i)
        z = model.blocks[i].y - design.mu[i]
        u = float(z @ design.sigma_inv[i] @ z)
        v = -2.0 * float(model.family.w_g(max(u, _U_CLAMP), q))
        s_i = np.concatenate([v * z, -vec(design.sigma[i] - v * np.outer(z, z))])
        zs.append(z)
        us.append(u)
        vs.append(v)
        ss.append(s_i)
    F_stack = np.vstack(design.F)
    s_stack = np.concatenate(ss)
    rank_f = int(np.linalg.matrix_rank(F_stack)) if check_rank else -1
    if check_rank and rank_f < model.p:
        warnings.warn(
            f"stacked derivative matrix F has rank {rank_f} < p = {model.p} "
            "at the evaluated theta",
            RankWarning,
            stacklevel=2,
        )
    return BlockMatrices(theta=theta, design=design, z=zs, u=np.array(us),
                         v=np.array(vs), s=ss, F_stack=F_stack, s_stack=s_stack,
                         rank_F=rank_f)


# ---------------------------------------------------------------------------
# likelihood, score, information
# ---------------------------------------------------------------------------

def log_likelihood(model, theta):
    """sum_i ( -1/2 log|Sigma_i| + log g(u_i) )."""
    theta = np.asarray(theta, dtype=float)
    total = 0.0
    for i in range(model.n):
        q = model.q_of(i)
        mu_i = model.mu(theta, i)
        low = chol_pd(model.sigma(theta, i))
        z = model.blocks[i].y - mu_i
        w = np.linalg.solve(low, z)
        u = float(w @ w)
        total += -0.5 * chol_logdet(low) + float(model.family.log_g(u, q))
    return total


def score(model, theta, blocks=None):
    """Score vector U(theta) = F' H s."""
    if blocks is None:
        blocks = assemble_blocks(model, theta, check_rank=False)
    return blocks.score()


def fisher_information(model, theta, blocks=None):
    """Fisher information K(theta) = F' (H M H) F (symmetric PSD)."""
    if blocks is None:
        blocks = assemble_blocks(model, theta, check_rank=False)
    return blocks.information()


def score_many(model, theta, ys):
    """Scores for many response sets sharing one design (all q_i = 1 only).

    ``ys`` has shape (batch, n); returns (batch, p).  This is the same
    F' H s computation as :func:`score`, vectorized across datasets for
    Monte Carlo work; equivalence with :func:`score` is unit-tested.
    """
    if any(b.q != 1 for b in model.blocks):
        raise DimensionError("score_many requires all block dimensions q_i = 1")
    design = _design_at(model, theta)
    mu = np.array([m[0] for m in design.mu])
    sig = np.array([s[0, 0] for s in design.sigma])
    D = np.vstack([d for d in design.D])            # (n, p)
    V = np.vstack([v for v in design.V])            # (n, p)
    ys = np.asarray(ys, dtype=float)
    z = ys - mu
    u = np.maximum(z * z / sig, _U_CLAMP)
    v = -2.0 * model.family.w_g(u, 1)
    top = (v * z / sig) @ D
    bot = ((v * z * z - sig) / (2.0 * sig * sig)) @ V
    return top + bot


# ---------------------------------------------------------------------------
# derivative self-consistency guard
# ---------------------------------------------------------------------------

def _fd_mu(model, theta, i, r, h):
    tp, tm = theta.copy(), theta.copy()
    tp[r] += h
    tm[r] -= h
    return (model.mu(tp, i) - model.mu(tm, i)) / (2.0 * h)


def _fd_sigma(model, theta, i, r, h):
    tp, tm = theta.copy(), theta.copy()
    tp[r] += h
    tm[r] -= h
    return (model.sigma(tp, i) - model.sigma(tm, i)) / (2.0 * h)


def validate_derivatives(model, theta, rtol=1e-4, n_checks=3, rng=None):
    """Consistency guard for finite-difference derivative fallbacks.

    When derivative callbacks are absent, the default-step central
    differences must agree with a finer (half-step) stencil within
    ``rtol`` relative error.  Checks a sample of observations and
    parameter indices; raises DomainError on failure.
    """
    theta = np.asarray(theta, dtype=float)
    rng = rng or np.random.default_rng(0)
    idx_i = rng.choice(model.n, size=min(n_checks, model.n), replace=False)
    for i in idx_i:
        for r in range(model.p):
            scale = 1.0 + abs(theta[r])
            if model._dmu is None:
                a1 = _fd_mu(model, theta, i, r, _FD_STEP1 * scale)
                a2 = _fd_mu(model, theta, i, r, 0.5 * _FD_STEP1 * scale)
                ref = max(np.max(np.abs(a2)), 1e-8)
                if np.max(np.abs(a1 - a2)) > rtol * ref:
                    raise DomainError(
                        f"finite-difference dmu is inconsistent at obs {i}, "
                        f"coordinate {r}; supply an analytic dmu callback"
                    )
            if model._dsigma is None:
                c1 = _fd_sigma(model, theta, i, r, _FD_STEP1 * scale)
                c2 = _fd_sigma(model, theta, i, r, 0.5 * _FD_STEP1 * scale)
                ref = max(np.max(np.abs(c2)), 1e-8)
                if np.max(np.abs(c1 - c2)) > rtol * ref:
                    raise DomainError(
                        f"finite-difference dSigma is inconsistent at obs {i}, "
                        f"coordinate {r}; supply an analytic dsigma callback"
                    )
    # second-derivative symmetry spot check
    for i in idx_i[:1]:
        for s in range(model.p):
            for r in range(s + 1, model.p):
                a_sr = model.d2mu(theta, i, s, r)
                a_rs = model.d2mu(theta, i, r, s)
                ref = max(np.max(np.abs(a_sr)), np.max(np.abs(a_rs)), 1e-6)
                if np.max(np.abs(a_sr - a_rs)) > 1e-3 * ref:
                    raise DomainError(
                        f"d2mu({s},{r}) is not symmetric in (s, r) at obs {i}"
                    )
                c_sr = model.d2sigma(theta, i, s, r)
                c_rs = model.d2sigma(theta, i, r, s)
                ref = max(np.max(np.abs(c_sr)), np.max(np.abs(c_rs)), 1e-6)
                if np.max(np.abs(c_sr - c_rs)) > 1e-3 * ref:
                    raise DomainError(
                        f"d2sigma({s},{r}) is not symmetric in (s, r) at obs {i}"
                    )
