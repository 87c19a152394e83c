"""Subsampled, ridge-regularized maximum pseudo-likelihood estimation.

The pseudo-likelihood replaces the intractable joint normalizer with a
product of single-dyad conditionals: for each dyad, the distribution of its
count given every other dyad is a one-dimensional exponential family with
weights ``w(v) = exp(theta . g_profile(v)) / v!``, normalized over a
truncated support chosen adaptively (see :class:`CapPolicy`). Dyads are
drawn with a tie/no-tie stratified scheme and re-weighted by inverse
inclusion probabilities, so the weighted objective is unbiased for the
full-census pseudo-log-likelihood.

Per-dyad contributions are evaluated in vectorized chunks with a fixed
chunk order, so values, gradients and Hessians are reproducible bit-for-bit
for a given sample.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import gammaln, logsumexp

from .errors import EstimationError, ValidationError
from .stats import ChangeStats, ModelSpec, model_to_dict

__all__ = [
    "CapPolicy",
    "DyadSample",
    "FitResult",
    "stratified_dyad_sample",
    "census_sample",
    "conditional_log_pmf",
    "penalized_pseudo_loglik",
    "fit_mple",
    "pseudo_bic",
    "effect_multiplier",
]

_CHUNK_DYADS = 16384
_CHUNK_ELEMENTS = 4 << 20  # budget on dyads * support size per chunk
_THETA_NORM_GUARD = 1e4


@dataclass(frozen=True)
class CapPolicy:
    """Truncation rule for single-dyad conditional supports.

    The support starts at max(observed y_ij, y_ji, ``min_cap``) and doubles
    until the last support point's share of the normalizer drops below
    ``tail_rel``, up to a hard ceiling of ``ceiling_factor`` times the
    largest observed edge value (never below the starting cap).
    """

    min_cap: int = 20
    tail_rel: float = 1e-12
    ceiling_factor: int = 10

    def initial(self, y_obs, y_rec, at_least=0):
        return int(max(int(y_obs), int(y_rec), self.min_cap, int(at_least)))

    def ceiling(self, network_max, floor):
        # floored at ceiling_factor * min_cap so that doubling still has
        # headroom on sparse networks whose largest edge is small
        return int(max(self.ceiling_factor * int(network_max),
                       self.ceiling_factor * self.min_cap, int(floor)))


# -- dyad indexing and sampling ---------------------------------------------

def _dyad_codes(src, dst, n):
    # linear index over ordered off-diagonal pairs, row-major with the
    # diagonal removed
    return src * (n - 1) + dst - (dst > src)


def _codes_to_dyads(codes, n):
    ii = codes // (n - 1)
    rr = codes - ii * (n - 1)
    jj = rr + (rr >= ii)
    return ii.astype(np.intp), jj.astype(np.intp)


@dataclass
class DyadSample:
    """A weighted set of ordered dyads for pseudo-likelihood evaluation.

    ``weights`` are Horvitz-Thompson inverse inclusion probabilities per
    stratum; ``strata_counts`` is (total nonzero, total zero, sampled
    nonzero, sampled zero).
    """

    src: np.ndarray
    dst: np.ndarray
    weights: np.ndarray
    strata_counts: tuple[int, int, int, int]
    seed: int | None = None

    @property
    def n_dyads(self):
        return len(self.src)

    @property
    def weight_total(self):
        return float(self.weights.sum())

    @property
    def pairs(self):
        return list(zip(self.src.tolist(), self.dst.tolist()))

    def summary(self):
        n1, n0, s1, s0 = self.strata_counts
        return {
            "n_dyads": self.n_dyads,
            "weight_total": self.weight_total,
            "total_nonzero": n1,
            "total_zero": n0,
            "sampled_nonzero": s1,
            "sampled_zero": s0,
            "seed": self.seed,
        }


def stratified_dyad_sample(network, n_total, seed):
    """Tie/no-tie stratified dyad sample with Horvitz-Thompson weights.

    Each draw picks the nonzero-dyad stratum or the zero-dyad stratum with
    equal probability and takes a not-yet-drawn dyad uniformly from it; once
    a stratum is exhausted the remaining draws come from the other. Sampled
    nonzero dyads get weight (total nonzero / sampled nonzero) and zero
    dyads (total zero / sampled zero). ``n_total`` above the dyad count is
    clamped to a census with unit weights.
    """
    n_total = int(n_total)
    if n_total < 1:
        raise ValidationError("n_total must be >= 1, got %d" % n_total)
    n = network.n_nodes
    total = n * (n - 1)
    src, dst, _ = network.edge_arrays()
    nz_codes = np.sort(_dyad_codes(src, dst, n))
    n1_total = len(nz_codes)
    n0_total = total - n1_total
    rng = np.random.default_rng(seed)

    if n_total >= total:
        codes = np.arange(total, dtype=np.int64)
        ii, jj = _codes_to_dyads(codes, n)
        return DyadSample(ii, jj, np.ones(total), (n1_total, n0_total, n1_total, n0_total),
                          seed=seed)

    heads = int(rng.binomial(n_total, 0.5))
    tails = n_total - heads
    n1 = min(n1_total, heads + max(0, tails - n0_total))
    n0 = n_total - n1

    take1 = np.sort(rng.choice(nz_codes, size=n1, replace=False)) if n1 else np.empty(0, np.int64)
    if n0:
        zero_codes = np.setdiff1d(np.arange(total, dtype=np.int64), nz_codes,
                                  assume_unique=True)
        take0 = np.sort(rng.choice(zero_codes, size=n0, replace=False))
    else:
        take0 = np.empty(0, np.int64)

    codes = np.concatenate([take1, take0])
    weights = np.concatenate([
        np.full(n1, n1_total / n1 if n1 else 1.0),
        np.full(n0, n0_total / n0 if n0 else 1.0),
    ])
    ii, jj = _codes_to_dyads(codes, n)
    return DyadSample(ii, jj, weights, (n1_total, n0_total, int(n1), int(n0)), seed=seed)


def census_sample(network):
    """Every ordered dyad once with unit weight."""
    return stratified_dyad_sample(network, network.n_dyads, seed=0)


# -- conditional pmf ---------------------------------------------------------

def _log_weight_matrix(cs, theta, ii, jj, vgrid, design=None):
    """Unnormalized conditional log-weights, shape (len(ii), len(vgrid))."""
    x = cs.linear_design(ii, jj) if design is None else design
    rate = x @ theta[cs.lin_pos]
    logw = rate[:, None] * vgrid[None, :].astype(np.float64)
    for pos, prof in cs.nonlinear_profiles(ii, jj, vgrid):
        logw += theta[pos] * prof
    logw -= gammaln(vgrid.astype(np.float64) + 1.0)
    return logw


def _normalized_rows(cs, theta, ii, jj, v_start, ceiling, tail_rel, design=None):
    """Log-weights and log-normalizers on an adaptively doubled support."""
    support = int(v_start)
    while True:
        vgrid = np.arange(support + 1, dtype=np.int64)
        logw = _log_weight_matrix(cs, theta, ii, jj, vgrid, design=design)
        lse = logsumexp(logw, axis=1)
        if not np.all(np.isfinite(lse)):
            bad = int(np.flatnonzero(~np.isfinite(lse))[0])
            raise EstimationError(
                "non-finite conditional normalizer for dyad (%d, %d); "
                "check theta and covariates for NaN/inf" % (ii[bad], jj[bad]))
        tail = logw[:, -1] - lse
        if support >= ceiling or float(tail.max()) <= math.log(tail_rel):
            return logw, lse, vgrid
        support = min(2 * support, ceiling)


def _check_theta(model, theta):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (model.n_terms,):
        raise ValidationError(
            "theta has shape %r, model has %d terms" % (theta.shape, model.n_terms))
    if not np.all(np.isfinite(theta)):
        raise ValidationError("theta contains non-finite entries")
    return theta


def conditional_log_pmf(model, theta, network, nodes, dyads, dyad, v, cap=None):
    """log P(y_ij = v | rest of network) under the model at ``theta``.

    Computed in log space with max-subtraction over the adaptively truncated
    support. For models whose terms are all affine in y_ij this reduces to a
    Poisson log-pmf with rate exp(theta . unit-change).
    """
    theta = _check_theta(model, theta)
    if v < 0 or int(v) != v:
        raise ValidationError("v must be a non-negative integer, got %r" % (v,))
    i, j = dyad
    if i == j:
        raise ValidationError("dyad (%r, %r) is a self-loop" % (i, j))
    cap = cap or CapPolicy()
    cs = ChangeStats(model, network, nodes, dyads)
    ii = np.array([int(i)], dtype=np.intp)
    jj = np.array([int(j)], dtype=np.intp)
    y_obs = int(cs.observed_values(ii, jj)[0])
    y_rec = int(cs.reciprocal_values(ii, jj)[0])
    v_start = cap.initial(y_obs, y_rec, at_least=v)
    ceiling = cap.ceiling(network.max_value, v_start)
    logw, lse, _ = _normalized_rows(cs, theta, ii, jj, v_start, ceiling, cap.tail_rel)
    return float(logw[0, int(v)] - lse[0])


# -- weighted pseudo-likelihood workspace ------------------------------------

class _Workspace:
    """Chunked evaluator of the weighted penalized pseudo-log-likelihood.

    Dyads are sorted by their initial support cap so that chunks are
    homogeneous; chunk sizes respect an element budget so a handful of
    large-valued dyads cannot blow up memory. Chunk order is fixed, which
    makes the reductions deterministic.
    """

    def __init__(self, model, network, nodes, dyads, sample, cap=None):
        if sample.n_dyads == 0:
            raise EstimationError("dyad sample is empty")
        self.model = model
        self.cap = cap or CapPolicy()
        self.cs = ChangeStats(model, network, nodes, dyads)
        ii = np.asarray(sample.src, dtype=np.intp)
        jj = np.asarray(sample.dst, dtype=np.intp)
        y = self.cs.observed_values(ii, jj).astype(np.int64)
        yrec = self.cs.reciprocal_values(ii, jj).astype(np.int64)
        v0 = np.maximum(np.maximum(y, yrec), self.cap.min_cap)
        order = np.argsort(v0, kind="stable")
        self.ii = ii[order]
        self.jj = jj[order]
        self.y = y[order]
        self.v0 = v0[order]
        self.w = np.asarray(sample.weights, dtype=np.float64)[order]
        self.sample = sample
        self.ceiling = self.cap.ceiling(network.max_value, int(self.v0.max()))
        self.design = self.cs.linear_design(self.ii, self.jj)
        self.nl_obs = self.cs.nonlinear_at_observed(self.ii, self.jj)
        self.n_terms = model.n_terms
        self.chunks = self._plan_chunks()

    def _plan_chunks(self):
        chunks = []
        start = 0
        n = len(self.y)
        while start < n:
            width = int(self.v0[start]) + 1
            span = max(64, _CHUNK_ELEMENTS // width)
            stop = min(n, start + min(span, _CHUNK_DYADS))
            chunks.append(slice(start, stop))
            start = stop
        return chunks

    def evaluate(self, theta, ridge_lambda, want_grad=True, want_hess=True):
        """(value, gradient, hessian) of the penalized objective at theta."""
        theta = _check_theta(self.model, theta)
        cs = self.cs
        lin_pos = cs.lin_pos
        value = 0.0
        grad = np.zeros(self.n_terms) if want_grad else None
        hess = np.zeros((self.n_terms, self.n_terms)) if want_hess else None

        for sl in self.chunks:
            ii, jj, y, w = self.ii[sl], self.jj[sl], self.y[sl], self.w[sl]
            x = self.design[sl]
            v_start = int(self.v0[sl][-1])
            logw, lse, vgrid = _normalized_rows(
                cs, theta, ii, jj, v_start, self.ceiling, self.cap.tail_rel, design=x)
            rows = np.arange(len(y))
            value += float(w @ (logw[rows, y] - lse))
            if not want_grad and not want_hess:
                continue

            p = np.exp(logw - lse[:, None])
            vf = vgrid.astype(np.float64)
            ev = p @ vf
            profs = cs.nonlinear_profiles(ii, jj, vgrid)
            means = {pos: np.einsum("dv,dv->d", p, prof) for pos, prof in profs}

            if want_grad:
                resid = y - ev
                grad[lin_pos] += x.T @ (w * resid)
                for pos, d_obs in self.nl_obs:
                    grad[pos] += float(w @ (d_obs[sl] - means[pos]))

            if want_hess:
                var_v = p @ (vf * vf) - ev * ev
                if len(lin_pos):
                    hess[np.ix_(lin_pos, lin_pos)] -= x.T @ (x * (w * var_v)[:, None])
                for pos, prof in profs:
                    cov_v = np.einsum("dv,dv->d", p, prof * vf[None, :]) - ev * means[pos]
                    block = x.T @ (w * cov_v)
                    hess[lin_pos, pos] -= block
                    hess[pos, lin_pos] -= block
                for a in range(len(profs)):
                    pos_a, prof_a = profs[a]
                    for b in range(a, len(profs)):
                        pos_b, prof_b = profs[b]
                        cov_ab = np.einsum("dv,dv->d", p, prof_a * prof_b) \
                            - means[pos_a] * means[pos_b]
                        hess[pos_a, pos_b] -= float(w @ cov_ab)
                        if pos_b != pos_a:
                            hess[pos_b, pos_a] = hess[pos_a, pos_b]

        value -= ridge_lambda * float(theta @ theta)
        if want_grad:
            grad -= 2.0 * ridge_lambda * theta
        if want_hess:
            hess -= 2.0 * ridge_lambda * np.eye(self.n_terms)
        if not math.isfinite(value):
            raise EstimationError("pseudo-log-likelihood is non-finite at theta=%r" % (theta,))
        return value, grad, hess


def penalized_pseudo_loglik(model, theta, network, nodes, dyads, sample,
                            ridge_lambda=0.0, *, gradient=False, hessian=False,
                            cap=None):
    """Weighted penalized pseudo-log-likelihood, optionally with derivatives.

    Value: sum over sampled dyads of weight * conditional log-pmf at the
    observed count, minus ``ridge_lambda * ||theta||^2``. The gradient is
    the weighted sum of (observed - conditional mean) statistics minus the
    penalty gradient; the Hessian is minus the weighted conditional
    covariances minus ``2 * ridge_lambda * I``.
    """
    if ridge_lambda < 0:
        raise ValidationError("ridge_lambda must be >= 0")
    ws = _Workspace(model, network, nodes, dyads, sample, cap=cap)
    value, grad, hess = ws.evaluate(theta, ridge_lambda,
                                    want_grad=gradient or hessian,
                                    want_hess=hessian)
    if hessian:
        return value, grad, hess
    if gradient:
        return value, grad
    return value


# -- fitting -----------------------------------------------------------------

@dataclass
class FitResult:
    """Outcome of a pseudo-likelihood fit.

    ``std_errors`` are pseudo-likelihood standard errors from the inverse
    penalized Hessian; they carry no design-based correction for dyad
    subsampling. NaN entries mean the Hessian was not invertible.
    """

    theta: np.ndarray
    std_errors: np.ndarray
    penalized_pll: float
    unpenalized_pll: float
    pseudo_bic: float
    converged: bool
    iterations: int
    ridge_lambda: float
    sample_meta: dict
    model: ModelSpec
    diagnostics: dict = field(default_factory=dict)

    @property
    def labels(self):
        return self.model.labels

    def coefficient(self, label):
        return float(self.theta[self.model.index_of(label)])

    def to_json_dict(self):
        return {
            "model": model_to_dict(self.model),
            "labels": list(self.labels),
            "theta": [float(x) for x in self.theta],
            "std_errors": [None if not math.isfinite(s) else float(s)
                           for s in self.std_errors],
            "penalized_pll": self.penalized_pll,
            "unpenalized_pll": self.unpenalized_pll,
            "pseudo_bic": self.pseudo_bic,
            "converged": self.converged,
            "iterations": self.iterations,
            "ridge_lambda": self.ridge_lambda,
            "sample": self.sample_meta,
            "diagnostics": self.diagnostics,
            "se_kind": "pseudo-likelihood (inverse penalized Hessian)",
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_coefficients_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["term", "estimate", "std_error"])
            for label, est, se in zip(self.labels, self.theta, self.std_errors):
                writer.writerow([label, repr(float(est)),
                                 "" if not math.isfinite(se) else repr(float(se))])


def fit_mple(model, network, nodes, dyads, sample, *, ridge_lambda=0.01,
             tol=1e-6, max_iter=50, cap=None, theta0=None):
    """Fit theta by damped Newton ascent on the penalized pseudo-likelihood.

    Iterates until the gradient max-norm drops below ``tol`` or ``max_iter``
    is hit; falls back to scaled gradient steps when the Hessian is not
    negative definite, and halves the step until the objective improves.
    Standard errors come from the inverse penalized Hessian at the optimum;
    a singular Hessian yields NaN standard errors and a non-converged flag
    rather than fabricated values.
    """
    if ridge_lambda < 0:
        raise ValidationError("ridge_lambda must be >= 0")
    ws = _Workspace(model, network, nodes, dyads, sample, cap=cap)
    n_terms = model.n_terms
    theta = np.zeros(n_terms) if theta0 is None else _check_theta(model, np.asarray(theta0, float))

    notes = []
    value, grad, hess = ws.evaluate(theta, ridge_lambda)
    iterations = 0
    converged = False
    for _ in range(max_iter):
        gmax = float(np.abs(grad).max())
        if gmax < tol:
            converged = True
            break
        iterations += 1
        try:
            factor = cho_factor(-hess)
            step = cho_solve(factor, grad)
        except LinAlgError:
            scale = max(1.0, float(np.abs(np.diag(hess)).max()))
            step = grad / scale
            notes.append("indefinite Hessian at iteration %d; gradient step" % iterations)
        slope = float(grad @ step)
        t = 1.0
        accepted = False
        for _ in range(40):
            cand = theta + t * step
            cand_value, cand_grad, cand_hess = ws.evaluate(cand, ridge_lambda)
            if cand_value >= value + 1e-4 * t * slope - 1e-12 * (1.0 + abs(value)):
                theta, value, grad, hess = cand, cand_value, cand_grad, cand_hess
                accepted = True
                break
            t *= 0.5
        if not accepted:
            notes.append("step halving stalled at iteration %d" % iterations)
            break
        if float(np.linalg.norm(theta)) > _THETA_NORM_GUARD:
            raise EstimationError(
                "theta norm exceeded %g after iteration %d; the model is "
                "diverging (check covariate scaling or increase ridge_lambda)"
                % (_THETA_NORM_GUARD, iterations))
    else:
        gmax = float(np.abs(grad).max())
        converged = gmax < tol

    gmax = float(np.abs(grad).max())
    if not converged and gmax < tol:
        converged = True

    neg_hess = -hess
    std_errors = np.full(n_terms, np.nan)
    cond = float(np.linalg.cond(neg_hess))
    if math.isfinite(cond) and cond < 1e12:
        try:
            factor = cho_factor(neg_hess)
            cov = cho_solve(factor, np.eye(n_terms))
            std_errors = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        except LinAlgError:
            notes.append("Hessian not positive definite at optimum")
            converged = False
    else:
        notes.append("singular or ill-conditioned Hessian at optimum (cond=%.3g)" % cond)
        converged = False

    unpenalized = value + ridge_lambda * float(theta @ theta)
    weight_total = ws.w.sum()
    bic = -2.0 * unpenalized + n_terms * math.log(weight_total)
    return FitResult(
        theta=theta,
        std_errors=std_errors,
        penalized_pll=value,
        unpenalized_pll=unpenalized,
        pseudo_bic=bic,
        converged=converged,
        iterations=iterations,
        ridge_lambda=ridge_lambda,
        sample_meta=sample.summary(),
        model=model,
        diagnostics={
            "gradient_max_norm": gmax,
            "hessian_condition": cond,
            "notes": notes,
        },
    )


def pseudo_bic(fit, effective_n=None):
    """-2 * unpenalized weighted pseudo-log-likelihood + k * log(n).

    ``effective_n`` defaults to the weighted dyad total of the fit's sample.
    """
    if not fit.converged:
        raise EstimationError("pseudo_bic requires a converged fit")
    if effective_n is None:
        effective_n = fit.sample_meta["weight_total"]
    if effective_n <= 1:
        raise ValidationError("effective_n must exceed 1")
    return -2.0 * fit.unpenalized_pll + fit.model.n_terms * math.log(effective_n)


def effect_multiplier(coef, delta, kind):
    """Percent change in expected flow for a covariate shift.

    ``additive_pp``: the covariate moves by ``delta`` in its own units
    (e.g. 0.10 for ten percentage points on a proportion scale), giving
    100 * (exp(coef * delta) - 1). ``relative``: the covariate's underlying
    quantity moves by a factor (1 + delta) and enters the model in logs,
    giving 100 * ((1 + delta) ** coef - 1).
    """
    if kind == "additive_pp":
        return 100.0 * (math.exp(coef * delta) - 1.0)
    if kind == "relative":
        if delta <= -1:
            raise ValidationError("relative delta must exceed -1, got %r" % (delta,))
        return 100.0 * ((1.0 + delta) ** coef - 1.0)
    raise ValidationError("kind must be 'additive_pp' or 'relative', got %r" % (kind,))
