"""Fitting and bias machinery: Fisher scoring MLE, second-order bias vector
in weighted-least-squares form, bias-corrected and bias-reduced estimators.

The second-order bias at theta is

    b(theta) = (F' Ht F)^{-1} F' Ht xi,   Ht = H M H,

with xi = (Phi_1, ..., Phi_p) vec((F' Ht F)^{-1}) and per-observation

    Phi_{i(r)} = -1/2 ( H_i^{-1} M_i^{-1} B_{i(r)} H_i F_i + dF_i/dtheta_r ),

where B_{i(r)} collects the eta/c/omega~ constants of the family and the
first derivatives of mu_i and Sigma_i.  The bias-corrected estimate is
theta_hat - b(theta_hat); the bias-reduced estimate solves the modified
score U(theta) - K(theta) b(theta) = 0 (Firth-type adjustment), which does
not require the MLE itself to be finite.

When the location and scale blocks share no parameters the computation
factorizes over the two blocks; see :func:`bias_vector_orthogonal`.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .exceptions import (
    ConfigError,
    DomainError,
    LinAlgError,
    NonConvergenceError,
    SingularInformationError,
    SplitError,
)
from .linalg import kron, solve_spd, unvec, vec
from .model import assemble_blocks, log_likelihood

__all__ = [
    "FitOptions",
    "FitResult",
    "BiasComponents",
    "fit",
    "fit_mle",
    "fit_bc",
    "fit_br",
    "bias_vector",
    "bias_vector_orthogonal",
    "information_criteria",
]


@dataclass(frozen=True)
class FitOptions:
    """Options shared by the MLE and bias-reduced fitters.

    Convergence requires sup-norm parameter change < tol and the sup-norm
    of the full scoring step (the score in parameter units) < sqrt(tol).
    """

    max_iter: int = 200
    tol: float = 1e-8
    step_halving_max: int = 30
    start: np.ndarray | None = None
    estimators: tuple = ("mle", "bc", "br")
    use_orthogonal_path: bool | None = None  # None: auto from the model split

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        bad = set(self.estimators) - {"mle", "bc", "br"}
        if bad:
            raise ConfigError(f"unknown estimators: {sorted(bad)}")


@dataclass
class FitResult:
    """Estimates, covariance, diagnostics and information criteria."""

    theta_mle: np.ndarray | None = None
    theta_bc: np.ndarray | None = None
    theta_br: np.ndarray | None = None
    bias_mle: np.ndarray | None = None
    cov: np.ndarray | None = None
    std_err: dict = field(default_factory=dict)
    loglik: float | None = None
    aic: float | None = None
    bic: float | None = None
    aicc: float | None = None
    iterations: int = 0
    iterations_br: int = 0
    converged: bool = False
    converged_br: bool = False
    trace: list = field(default_factory=list)

    def estimate(self, which):
        return {"mle": self.theta_mle, "bc": self.theta_bc, "br": self.theta_br}[which]


@dataclass
class BiasComponents:
    """Second-order bias vector plus the per-observation building blocks."""

    bias: np.ndarray
    K: np.ndarray
    method: str
    xi: np.ndarray | None = None       # stacked over observations (general path)
    phi: list | None = None            # phi[i][r]
    B: list | None = None
    S1: list | None = None
    S2: list | None = None
    dF: list | None = None
    xi1: np.ndarray | None = None      # orthogonal path block stacks
    xi2: np.ndarray | None = None


def information_criteria(result, n, p):
    """(AIC, BIC, AICc) from a fitted log-likelihood.

    ``result`` may be a FitResult or a plain log-likelihood value.
    AICc requires n > p + 1.
    """
    loglik = getattr(result, "loglik", result)
    if loglik is None or not np.isfinite(loglik):
        raise DomainError("information criteria need a finite log-likelihood")
    aic = -2.0 * loglik + 2.0 * p
    bic = -2.0 * loglik + p * math.log(n)
    if n <= p + 1:
        raise DomainError(f"AICc undefined for n = {n} <= p + 1 = {p + 1}")
    aicc = aic + 2.0 * p * (p + 1.0) / (n - p - 1.0)
    return aic, bic, aicc


# ---------------------------------------------------------------------------
# bias vector, general path (and its normal-family reduction)
# ---------------------------------------------------------------------------

def _second_derivative_tensors(model, theta, i):
    """A2[s][r] = d2 mu_i, C2[s][r] = d2 Sigma_i, built on s <= r and mirrored."""
    p = model.p
    a2 = [[None] * p for _ in range(p)]
    c2 = [[None] * p for _ in range(p)]
    for s in range(p):
        for r in range(s, p):
            a2[s][r] = model.d2mu(theta, i, s, r)
            c2[s][r] = model.d2sigma(theta, i, s, r)
            a2[r][s] = a2[s][r]
            c2[r][s] = c2[s][r]
    return a2, c2


def _dF_blocks(model, theta, i, q):
    """dF_i/dtheta_r for all r: top rows stack d2mu columns, bottom vec(d2Sigma)."""
    p = model.p
    a2, c2 = _second_derivative_tensors(model, theta, i)
    out = []
    for r in range(p):
        top = np.column_stack([a2[r][s] for s in range(p)])
        bot = np.column_stack([vec(c2[r][s]) for s in range(p)])
        out.append(np.vstack([top, bot]))
    return out


def _hinv_minv(q, sigma, sigma_inv, cst):
    """H_i^{-1} M_i^{-1} = block-diag((1/m1) I, G) in closed form."""
    c = cst.c
    g = np.eye(q * q) / c
    if c != 1.0:
        denom = 2.0 * c + (c - 1.0) * q
        if denom <= 0:
            raise LinAlgError("distribution matrix M is not positive definite")
        g -= ((c - 1.0) / (c * denom)) * np.outer(vec(sigma), vec(sigma_inv))
    out = np.zeros((q + q * q, q + q * q))
    out[:q, :q] = np.eye(q) / cst.m1
    out[q:, q:] = g
    return out


def _b_block(q, sigma, sigma_inv, cst, a_r, c_r):
    """B_{i(r)}: the cumulant-collecting block of the Phi display."""
    vs = vec(sigma)
    vc = vec(c_r)
    tr_cs = float(np.trace(c_r @ sigma_inv))
    eta1, eta2 = cst.eta1, cst.eta2
    c = cst.c

    s1 = np.outer(vs, vc) + 0.5 * tr_cs * np.outer(vs, vs)
    s2 = (
        np.outer(vc, vs)
        + np.outer(vs, vc)
        + 4.0 * kron(sigma, c_r)
        + tr_cs * (kron(sigma, sigma) + 0.5 * np.outer(vs, vs))
    )

    d = q + q * q
    b = np.zeros((d, d))
    b[:q, :q] = -0.5 * eta1 * c_r - 0.25 * eta1 * tr_cs * sigma
    b[:q, q:] = -eta1 * kron(sigma, a_r[None, :]) - 0.5 * eta1 * np.outer(a_r, vs)
    b[q:, :q] = -eta2 * kron(sigma, a_r[:, None]) - 0.5 * eta1 * np.outer(vs, a_r)
    b[q:, q:] = -(c - 1.0) * s1 - 0.5 * (c + 8.0 * cst.omega_tilde) * s2
    return b, s1, s2


def bias_vector(model, theta, blocks=None, normal_reduction="auto",
                keep_components=True):
    """Second-order bias vector at theta via the weighted-least-squares form.

    ``normal_reduction`` selects the reduced J-form valid under the normal
    family ("auto" uses it whenever the family is normal); the general path
    and the reduction agree to machine precision there.
    """
    theta = np.asarray(theta, dtype=float)
    if blocks is None:
        blocks = assemble_blocks(model, theta, check_rank=False)
    design = blocks.design
    p = model.p

    is_normal = all(cst.c == 1.0 and cst.eta1 == 0.0 and cst.eta2 == -2.0
                    for cst in design.consts)
    if normal_reduction == "auto":
        normal_reduction = is_normal
    if normal_reduction and not is_normal:
        raise DomainError("normal_reduction requires the normal family")

    k_mat = blocks.information()
    try:
        k_inv = solve_spd(k_mat, np.eye(p))
    except LinAlgError as exc:
        raise SingularInformationError(f"Fisher information is singular: {exc}") from exc
    k_inv = 0.5 * (k_inv + k_inv.T)

    rhs = np.zeros(p)
    xi_parts = []
    phi_all, b_all, s1_all, s2_all, df_all = [], [], [], [], []
    for i in range(model.n):
        q = model.q_of(i)
        sigma = design.sigma[i]
        sigma_inv = design.sigma_inv[i]
        cst = design.consts[i]
        f_i = design.F[i]
        h_i = design.H[i]
        ht_i = design.Htilde[i]
        d_i = design.D[i]
        df_r = _dF_blocks(model, theta, i, q)

        phis = []
        bs, s1s, s2s = [], [], []
        if normal_reduction:
            for r in range(p):
                a_r = d_i[:, r]
                j_r = np.zeros((q + q * q, p))
                j_r[q:, :] = 2.0 * kron(np.eye(q), a_r[:, None]) @ d_i
                phis.append(-0.5 * (j_r + df_r[r]))
        else:
            hf = h_i @ f_i
            him = _hinv_minv(q, sigma, sigma_inv, cst)
            for r in range(p):
                a_r = d_i[:, r]
                c_r = unvec(design.V[i][:, r], q)
                b_r, s1_r, s2_r = _b_block(q, sigma, sigma_inv, cst, a_r, c_r)
                phis.append(-0.5 * (him @ b_r @ hf + df_r[r]))
                if keep_components:
                    bs.append(b_r)
                    s1s.append(s1_r)
                    s2s.append(s2_r)

        xi_i = np.zeros(q + q * q)
        for r in range(p):
            xi_i += phis[r] @ k_inv[:, r]
        rhs += f_i.T @ (ht_i @ xi_i)
        if keep_components:
            xi_parts.append(xi_i)
            phi_all.append(phis)
            b_all.append(bs)
            s1_all.append(s1s)
            s2_all.append(s2s)
            df_all.append(df_r)

    bias = k_inv @ rhs
    method = "normal-reduced" if normal_reduction else "general"
    if not keep_components:
        return BiasComponents(bias=bias, K=k_mat, method=method)
    return BiasComponents(
        bias=bias, K=k_mat, method=method, xi=np.concatenate(xi_parts),
        phi=phi_all, B=b_all, S1=s1_all, S2=s2_all, dF=df_all,
    )


# ---------------------------------------------------------------------------
# bias vector, orthogonal location/scale fast path
# ---------------------------------------------------------------------------

def _check_split(model, blocks, p1):
    """Cross-derivative blocks must vanish under the declared split."""
    for i in range(model.n):
        d_i, v_i = blocks.design.D[i], blocks.design.V[i]
        scale_d = max(np.max(np.abs(d_i)), 1.0)
        scale_v = max(np.max(np.abs(v_i)), 1.0)
        if np.max(np.abs(d_i[:, p1:])) > 1e-8 * scale_d:
            raise SplitError(
                f"mu_{i} depends on theta2: declared orthogonal split is violated"
            )
        if np.max(np.abs(v_i[:, :p1])) > 1e-8 * scale_v:
            raise SplitError(
                f"Sigma_{i} depends on theta1: declared orthogonal split is violated"
            )


def bias_vector_orthogonal(model, theta, blocks=None, keep_components=True):
    """Blockwise bias vector for models with mu(theta1), Sigma(theta2).

    Equals :func:`bias_vector` on models with a valid declared split; the
    information and the weighted least-squares system factorize over the
    two parameter blocks, so only p1 x p1 and p2 x p2 systems are solved.
    """
    if model.orthogonal_split is None:
        raise SplitError("model does not declare an orthogonal location/scale split")
    p1, p2 = model.orthogonal_split
    theta = np.asarray(theta, dtype=float)
    if blocks is None:
        blocks = assemble_blocks(model, theta, check_rank=False)
    design = blocks.design
    _check_split(model, blocks, p1)

    k1 = np.zeros((p1, p1))
    k2 = np.zeros((p2, p2))
    for i in range(model.n):
        q = model.q_of(i)
        d1 = design.D[i][:, :p1]
        v2 = design.V[i][:, p1:]
        ht1 = design.Htilde[i][:q, :q]
        ht2 = design.Htilde[i][q:, q:]
        k1 += d1.T @ ht1 @ d1
        k2 += v2.T @ ht2 @ v2
    try:
        k1_inv = solve_spd(0.5 * (k1 + k1.T), np.eye(p1))
        k2_inv = solve_spd(0.5 * (k2 + k2.T), np.eye(p2))
    except LinAlgError as exc:
        raise SingularInformationError(f"Fisher information is singular: {exc}") from exc

    rhs1 = np.zeros(p1)
    rhs2 = np.zeros(p2)
    xi1_parts, xi2_parts = [], []
    for i in range(model.n):
        q = model.q_of(i)
        sigma = design.sigma[i]
        sigma_inv = design.sigma_inv[i]
        cst = design.consts[i]
        d1 = design.D[i][:, :p1]
        v2 = design.V[i][:, p1:]
        ht1 = design.Htilde[i][:q, :q]
        ht2 = design.Htilde[i][q:, q:]
        vs = vec(sigma)

        a2, c2 = _second_derivative_tensors(model, theta, i)

        # location block: xi1_i = -1/2 sum_r Ddot^{(r)} K1^{-1} e_r
        xi1_i = np.zeros(q)
        for r in range(p1):
            ddot = np.column_stack([a2[r][s] for s in range(p1)])
            xi1_i -= 0.5 * ddot @ k1_inv[:, r]

        # scale block
        g = _hinv_minv(q, sigma, sigma_inv, cst)[q:, q:]
        xi2_i = np.zeros(q * q)
        for r in range(p1):
            a_r = d1[:, r]
            p_star = (
                2.0 * cst.eta2 * kron(np.eye(q), a_r[:, None])
                + cst.eta1 * np.outer(vs, sigma_inv @ a_r)
            ) @ d1
            xi2_i += 0.25 * g @ (p_star @ k1_inv[:, r])
        kk_inv_full = kron(sigma_inv, sigma_inv)
        for s in range(p2):
            c_s = unvec(v2[:, s], q)
            _, s1_s, s2_s = _b_block(q, sigma, sigma_inv, cst, np.zeros(q), c_s)
            q_star = (
                (cst.c - 1.0) * s1_s + 0.5 * (cst.c + 8.0 * cst.omega_tilde) * s2_s
            ) @ kk_inv_full @ v2
            vdot = np.column_stack([vec(c2[p1 + s][p1 + t]) for t in range(p2)])
            xi2_i += (0.25 * g @ q_star - 0.5 * vdot) @ k2_inv[:, s]

        rhs1 += d1.T @ (ht1 @ xi1_i)
        rhs2 += v2.T @ (ht2 @ xi2_i)
        if keep_components:
            xi1_parts.append(xi1_i)
            xi2_parts.append(xi2_i)

    bias = np.concatenate([k1_inv @ rhs1, k2_inv @ rhs2])
    k_full = np.zeros((model.p, model.p))
    k_full[:p1, :p1] = k1
    k_full[p1:, p1:] = k2
    if not keep_components:
        return BiasComponents(bias=bias, K=k_full, method="orthogonal")
    return BiasComponents(
        bias=bias, K=k_full, method="orthogonal",
        xi1=np.concatenate(xi1_parts), xi2=np.concatenate(xi2_parts),
    )


def _bias_auto(model, theta, blocks, opts, keep_components=False):
    use_orth = opts.use_orthogonal_path
    if use_orth is None:
        use_orth = model.orthogonal_split is not None
    if use_orth:
        return bias_vector_orthogonal(model, theta, blocks=blocks,
                                      keep_components=keep_components)
    return bias_vector(model, theta, blocks=blocks, keep_components=keep_components)


# ---------------------------------------------------------------------------
# fitters
# ---------------------------------------------------------------------------

def _default_start(model):
    """Least squares for location parameters with Sigma = I, then moments."""
    if model.start_heuristic is not None:
        return np.asarray(model.start_heuristic(model), dtype=float)
    if model.orthogonal_split is None:
        raise ConfigError(
            "no starting value: supply FitOptions.start or a model start heuristic"
        )
    p1, p2 = model.orthogonal_split

    def resid(t1):
        theta = np.concatenate([t1, np.ones(p2)])
        return np.concatenate([model.blocks[i].y - model.mu(theta, i)
                               for i in range(model.n)])

    ls = least_squares(resid, np.ones(p1), method="lm", max_nfev=200 * p1)
    t1 = ls.x

    def scale_resid(t2):
        theta = np.concatenate([t1, t2])
        out = []
        xi = None
        for i in range(model.n):
            q = model.q_of(i)
            xi = model.family.variance_scale(q) or 1.0
            z = model.blocks[i].y - model.mu(theta, i)
            try:
                s = model.sigma(theta, i)
            except (LinAlgError, DomainError, FloatingPointError):
                return np.full(1, 1e6)
            out.append(vec(s - np.outer(z, z) / xi))
        return np.concatenate(out)

    ls2 = least_squares(scale_resid, np.ones(p2), method="lm", max_nfev=200 * p2)
    return np.concatenate([t1, ls2.x])


def _resolve_start(model, opts):
    if opts.start is not None:
        start = np.asarray(opts.start, dtype=float)
        if start.shape != (model.p,):
            raise ConfigError(f"start must have shape ({model.p},)")
        return start
    return _default_start(model)


def _scoring_loop(model, theta0, opts, modified):
    """Shared Fisher-scoring loop; ``modified`` subtracts the bias each step.

    Plain scoring accepts steps that do not decrease the log-likelihood;
    the modified (bias-reduced) scoring is a root-finder for the adjusted
    score, so step halving is driven by non-increase of the score residual
    measured in parameter units instead.  Each accepted iteration costs one
    block assembly and (for the modified path) one bias evaluation, since
    the quantities computed to vet a candidate are carried forward.
    """
    theta = theta0.copy()
    trace = []
    converged = False

    def state_at(point, blocks_):
        """(step, crit) at a point: the full adjusted scoring step."""
        u = blocks_.score()
        k = blocks_.information()
        step = solve_spd(k, u)
        if modified:
            step = step - _bias_auto(model, point, blocks_, opts).bias
        return step

    blocks = assemble_blocks(model, theta, check_rank=False)
    ll = None if modified else blocks.loglik(model)
    try:
        step = state_at(theta, blocks)
    except LinAlgError as exc:
        raise SingularInformationError(
            f"information matrix singular at the start: {exc}"
        ) from exc
    res_norm = float(np.max(np.abs(step)))

    iterations = 0
    for it in range(1, opts.max_iter + 1):
        iterations = it
        lam = 1.0
        accepted = False
        for _ in range(opts.step_halving_max + 1):
            cand = theta + lam * step
            try:
                cand_blocks = assemble_blocks(model, cand, check_rank=False)
                if modified:
                    step_c = state_at(cand, cand_blocks)
                    ok = np.max(np.abs(step_c)) <= res_norm * (1.0 + 1e-10)
                else:
                    ll_c = cand_blocks.loglik(model)
                    ok = ll_c >= ll - 1e-12
            except (LinAlgError, DomainError, SingularInformationError,
                    FloatingPointError):
                ok = False
            if ok:
                accepted = True
                break
            lam *= 0.5

        if not accepted:
            break  # stalled at a point where no acceptable step exists

        delta = cand - theta
        theta = cand
        blocks = cand_blocks
        if modified:
            step = step_c
            res_norm = float(np.max(np.abs(step)))
            trace.append({"iter": it, "res": res_norm, "lam": lam})
        else:
            ll = ll_c
            try:
                step = state_at(theta, blocks)
            except LinAlgError as exc:
                raise SingularInformationError(
                    f"information matrix singular at iteration {it}: {exc}"
                ) from exc
            res_norm = float(np.max(np.abs(step)))
            trace.append({"iter": it, "loglik": ll, "lam": lam})

        if np.max(np.abs(delta)) < opts.tol and res_norm < math.sqrt(opts.tol):
            converged = True
            break

    return theta, converged, iterations, trace, blocks


def _std_err_at(model, theta):
    k = assemble_blocks(model, theta, check_rank=False).information()
    cov = solve_spd(k, np.eye(model.p))
    return 0.5 * (cov + cov.T)


def fit(model, opts=None):
    """Fit the requested estimators; see :class:`FitOptions`.

    The bias-reduced estimator is computed even when the plain MLE fails
    to converge (it does not require a finite MLE); in that case it starts
    from the same starting value.
    """
    opts = opts or FitOptions()
    want = set(opts.estimators)
    start = _resolve_start(model, opts)
    result = FitResult()
    mle_start = start

    need_mle = bool(want & {"mle", "bc"})
    if need_mle or "br" in want:
        try:
            theta, conv, iters, trace, blocks = _scoring_loop(model, start, opts,
                                                              modified=False)
            result.iterations = iters
            result.trace = trace
        except SingularInformationError:
            # a singular MLE path must not abort the bias-reduced fit
            if need_mle:
                raise
            theta, conv = None, False
        result.converged = conv
        if need_mle:
            result.theta_mle = theta
            result.loglik = log_likelihood(model, theta)
            cov = solve_spd(blocks.information(), np.eye(model.p))
            result.cov = 0.5 * (cov + cov.T)
            result.std_err["mle"] = np.sqrt(np.diag(result.cov))
            try:
                result.aic, result.bic, result.aicc = information_criteria(
                    result.loglik, model.n, model.p)
            except DomainError:
                result.aic = -2.0 * result.loglik + 2.0 * model.p
                result.bic = -2.0 * result.loglik + model.p * math.log(model.n)
                result.aicc = None

        if "bc" in want:
            if not conv:
                raise NonConvergenceError(
                    "bias correction needs a converged MLE; fit did not converge"
                )
            comps = _bias_auto(model, theta, blocks, opts, keep_components=False)
            result.bias_mle = comps.bias
            result.theta_bc = theta - comps.bias
            try:
                cov_bc = _std_err_at(model, result.theta_bc)
                result.std_err["bc"] = np.sqrt(np.diag(cov_bc))
            except (LinAlgError, DomainError):
                result.std_err["bc"] = np.full(model.p, np.nan)

        if conv:
            mle_start = theta

    if "br" in want:
        theta_br, conv_br, iters_br, trace_br, _ = _scoring_loop(
            model, mle_start, opts, modified=True)
        result.theta_br = theta_br
        result.converged_br = conv_br
        result.iterations_br = iters_br
        result.trace.extend({"stage": "br", **t} for t in trace_br)
        try:
            cov_br = _std_err_at(model, theta_br)
            result.std_err["br"] = np.sqrt(np.diag(cov_br))
        except (LinAlgError, DomainError):
            result.std_err["br"] = np.full(model.p, np.nan)

    return result


def fit_mle(model, opts=None):
    """Maximum likelihood via Fisher scoring (iterative reweighted LS)."""
    opts = opts or FitOptions()
    return fit(model, FitOptions(max_iter=opts.max_iter, tol=opts.tol,
                                 step_halving_max=opts.step_halving_max,
                                 start=opts.start, estimators=("mle",),
                                 use_orthogonal_path=opts.use_orthogonal_path))


def fit_bc(model, opts=None):
    """MLE minus its estimated second-order bias."""
    opts = opts or FitOptions()
    return fit(model, FitOptions(max_iter=opts.max_iter, tol=opts.tol,
                                 step_halving_max=opts.step_halving_max,
                                 start=opts.start, estimators=("mle", "bc"),
                                 use_orthogonal_path=opts.use_orthogonal_path))


def fit_br(model, opts=None):
    """Root of the bias-adjusted score (preventive bias reduction)."""
    opts = opts or FitOptions()
    return fit(model, FitOptions(max_iter=opts.max_iter, tol=opts.tol,
                                 step_halving_max=opts.step_halving_max,
                                 start=opts.start, estimators=("mle", "br"),
                                 use_orthogonal_path=opts.use_orthogonal_path))
