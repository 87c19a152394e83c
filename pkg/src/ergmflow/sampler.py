"""Metropolis-Hastings simulation from a fitted model, plus model-adequacy
checks and coefficient-knockout counterfactuals.

The chain moves one dyad at a time. A dyad is chosen by a mixture of
uniform-over-all-dyads and uniform-over-currently-nonzero-dyads selection;
its value is perturbed by a unit step (reflecting at zero) or a
geometric-tailed jump. Acceptance uses the exact conditional weight ratio,
including the 1/v! reference factor, the value-proposal asymmetry at zero,
and the state-dependent dyad-selection ratio, so detailed balance holds
exactly. Each chain owns a private dense copy of the network and a private
random stream; nothing is shared between chains.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .network import FlowNetwork
from .stats import ChangeStats

__all__ = [
    "ProposalConfig",
    "ChainConfig",
    "ChainRun",
    "mcmc_simulate",
    "adequacy_check",
    "AdequacyReport",
    "expected_total_flow",
    "knockout_experiment",
    "KnockoutReport",
    "lag1_autocorrelation",
]

_RNG_BLOCK = 1 << 16


@dataclass(frozen=True)
class ProposalConfig:
    """Move kernel knobs.

    ``p_unit`` is the probability of a +/-1 step (reflecting at 0), the rest
    of the mass goes to a geometric jump with success probability
    ``geom_p``; ``p_nonzero`` is the chance of restricting dyad choice to
    currently nonzero dyads (falling back to uniform when there are none).
    """

    p_unit: float = 0.8
    geom_p: float = 0.3
    p_nonzero: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.p_unit <= 1.0):
            raise ValidationError("p_unit must be in [0, 1]")
        if not (0.0 < self.geom_p < 1.0):
            raise ValidationError("geom_p must be in (0, 1)")
        if not (0.0 <= self.p_nonzero < 1.0):
            raise ValidationError("p_nonzero must be in [0, 1)")


@dataclass(frozen=True)
class ChainConfig:
    """Chain length controls. ``burn_in`` and ``thin`` default to 10 and 2
    proposals per dyad; check the reported Sum-statistic autocorrelation and
    raise ``thin`` if it exceeds ~0.1."""

    n_networks: int = 100
    burn_in: int | None = None
    thin: int | None = None
    proposal: ProposalConfig = field(default_factory=ProposalConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n_networks < 1:
            raise ValidationError("n_networks must be >= 1")
        if self.burn_in is not None and self.burn_in < 1:
            raise ValidationError("burn_in must be >= 1 when given")
        if self.thin is not None and self.thin < 1:
            raise ValidationError("thin must be >= 1 when given")

    def resolved(self, n_dyads):
        burn = self.burn_in if self.burn_in is not None else 10 * n_dyads
        thin = self.thin if self.thin is not None else max(1, 2 * n_dyads)
        return int(burn), int(thin)


class ChainRun(list):
    """Sequence of sampled :class:`FlowNetwork` states plus chain diagnostics."""

    def __init__(self, networks, sum_series, n_proposals, n_accepted,
                 n_rejected_invalid, n_nonfinite, burn_in, thin, seed):
        super().__init__(networks)
        self.sum_series = np.asarray(sum_series, dtype=np.float64)
        self.n_proposals = n_proposals
        self.n_accepted = n_accepted
        self.n_rejected_invalid = n_rejected_invalid
        self.n_nonfinite = n_nonfinite
        self.burn_in = burn_in
        self.thin = thin
        self.seed = seed

    @property
    def acceptance_rate(self):
        return self.n_accepted / self.n_proposals if self.n_proposals else 0.0


def lag1_autocorrelation(series):
    x = np.asarray(series, dtype=np.float64)
    if len(x) < 3 or x.std() == 0:
        return 0.0
    x = x - x.mean()
    return float((x[:-1] @ x[1:]) / (x @ x))


def _linear_rate_matrix(cs, theta):
    n = cs.n_nodes
    rate = np.zeros((n, n))
    for k, pos in enumerate(cs.lin_pos):
        th = float(theta[pos])
        how, payload = cs.lin_payload[k]
        if how == "const":
            rate += th
        elif how == "row":
            rate += th * payload[:, None]
        elif how == "col":
            rate += th * payload[None, :]
        else:
            rate += th * payload
    return rate


def mcmc_simulate(model, theta, nodes, dyads, init, config, step_observer=None):
    """Run one Metropolis-Hastings chain and return sampled networks.

    Returns a :class:`ChainRun`: a list of ``config.n_networks`` networks
    taken every ``thin`` proposals after ``burn_in`` proposals, carrying the
    Sum-statistic series and acceptance diagnostics. Identical (seed,
    config, theta) always reproduce the identical sequence.

    ``step_observer``, when given, is called as ``observer(step, state)``
    after every proposal with the current dense value matrix (a nested list;
    treat it as read-only). Intended for desk-scale diagnostics.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (model.n_terms,):
        raise ValidationError("theta has shape %r for a %d-term model"
                              % (theta.shape, model.n_terms))
    if not np.all(np.isfinite(theta)):
        raise ValidationError("theta contains non-finite entries")
    cs = ChangeStats(model, init, nodes, dyads)
    n = init.n_nodes
    n_dyads = n * (n - 1)
    burn_in, thin = config.resolved(n_dyads)
    prop = config.proposal
    rng = np.random.default_rng(config.seed)

    rate = _linear_rate_matrix(cs, theta)
    th_nz = th_mm = th_wp = 0.0
    for pos, kind in cs.nonlin:
        if kind == "nonzero":
            th_nz = float(theta[pos])
        elif kind == "mutual_min":
            th_mm = float(theta[pos])
        else:
            th_wp = float(theta[pos])

    y = [row.tolist() for row in init.dense_matrix()]
    out_vol = init.out_volumes().tolist()
    in_vol = init.in_volumes().tolist()
    total = init.total_flow
    nz_list = []
    nz_pos = {}
    for (i, j), _v in init.items():
        code = i * n + j
        nz_pos[code] = len(nz_list)
        nz_list.append(code)

    rate_rows = [row.tolist() for row in rate]
    p_unit = prop.p_unit
    p_nonzero = prop.p_nonzero
    geo_unit = (1.0 - p_unit) * 0.5 * prop.geom_p  # mixture mass of a 1-jump
    lgamma = math.lgamma
    log = math.log
    uniform_sel = 1.0 / n_dyads
    half_uniform = (1.0 - p_nonzero) / n_dyads

    total_steps = burn_in + thin * config.n_networks
    networks = []
    sums = []
    n_accepted = 0
    n_invalid = 0
    n_nonfinite = 0
    step = 0
    while step < total_steps:
        block = min(_RNG_BLOCK, total_steps - step)
        u = rng.random((block, 5))
        geo = rng.geometric(prop.geom_p, block)
        u0 = u[:, 0].tolist()
        u1 = u[:, 1].tolist()
        u2 = u[:, 2].tolist()
        u3 = u[:, 3].tolist()
        u4 = u[:, 4].tolist()
        geo_l = geo.tolist()
        for s in range(block):
            step += 1
            nzc = len(nz_list)
            if nzc > 0 and u0[s] < p_nonzero:
                code = nz_list[int(u1[s] * nzc)]
                i = code // n
                j = code - i * n
            else:
                k = int(u1[s] * n_dyads)
                i = k // (n - 1)
                r = k - i * (n - 1)
                j = r + (r >= i)
            row = y[i]
            v = row[j]
            if u2[s] < p_unit:
                vp = v + 1 if (v == 0 or u3[s] < 0.5) else v - 1
            else:
                g = geo_l[s]
                vp = v + g if u3[s] < 0.5 else v - g
                if vp < 0:
                    n_invalid += 1
                    if step_observer is not None:
                        step_observer(step, y)
                    if step > burn_in and (step - burn_in) % thin == 0:
                        networks.append(FlowNetwork.from_dense(
                            np.asarray(y, dtype=np.int64), node_ids=init.node_ids))
                        sums.append(total)
                    continue
            d = vp - v
            dlp = rate_rows[i][j] * d - (lgamma(vp + 1) - lgamma(v + 1))
            if th_nz != 0.0:
                dlp += th_nz * ((vp > 0) - (v > 0))
            if th_mm != 0.0:
                yji = y[j][i]
                dlp += th_mm * (min(vp, yji) - min(v, yji))
            if th_wp != 0.0:
                oi = out_vol[i]
                ini = in_vol[i]
                oj = out_vol[j]
                inj = in_vol[j]
                dlp += th_wp * (min(oi + d, ini) - min(oi, ini)
                                + min(inj + d, oj) - min(inj, oj))

            nzp = nzc + (vp > 0) - (v > 0)
            sel_f = (half_uniform + (p_nonzero / nzc if v > 0 else 0.0)) \
                if nzc > 0 else uniform_sel
            sel_r = (half_uniform + (p_nonzero / nzp if vp > 0 else 0.0)) \
                if nzp > 0 else uniform_sel
            if d == 1 or d == -1:
                qf = geo_unit + p_unit * (1.0 if v == 0 else 0.5)
                qr = geo_unit + p_unit * (1.0 if vp == 0 else 0.5)
            else:
                qf = qr = 1.0  # geometric mass at |d| is shared and cancels
            log_alpha = dlp + log(qr * sel_r) - log(qf * sel_f)
            if not math.isfinite(log_alpha):
                n_nonfinite += 1
            elif log_alpha >= 0.0 or log(u4[s]) < log_alpha:
                n_accepted += 1
                row[j] = vp
                out_vol[i] += d
                in_vol[j] += d
                total += d
                code = i * n + j
                if v == 0:
                    nz_pos[code] = len(nz_list)
                    nz_list.append(code)
                elif vp == 0:
                    at = nz_pos.pop(code)
                    last = nz_list.pop()
                    if last != code:
                        nz_list[at] = last
                        nz_pos[last] = at
            if step_observer is not None:
                step_observer(step, y)
            if step > burn_in and (step - burn_in) % thin == 0:
                networks.append(FlowNetwork.from_dense(
                    np.asarray(y, dtype=np.int64), node_ids=init.node_ids))
                sums.append(total)

    return ChainRun(networks, sums, total_steps, n_accepted, n_invalid,
                    n_nonfinite, burn_in, thin, config.seed)


# -- multi-chain orchestration ------------------------------------------------

def _chain_worker(args):
    model, theta, nodes, dyads, init, config, keep_networks = args
    run = mcmc_simulate(model, theta, nodes, dyads, init, config)
    return (list(run) if keep_networks else None, run.sum_series,
            run.n_accepted, run.n_proposals, run.n_nonfinite)


def _simulate_many(model, theta, nodes, dyads, init, config, n_chains=1,
                   n_jobs=1, keep_networks=True):
    """Split config.n_networks over chains with per-chain derived seeds.

    With ``n_chains == 1`` this is exactly one :func:`mcmc_simulate` call at
    ``config.seed``. The chain partition depends only on ``n_chains``, so
    results are reproducible for any worker count.
    """
    if n_chains < 1:
        raise ValidationError("n_chains must be >= 1")
    if n_chains == 1:
        run = mcmc_simulate(model, theta, nodes, dyads, init, config)
        return list(run), run.sum_series, {
            "acceptance_rate": run.acceptance_rate,
            "n_nonfinite": run.n_nonfinite,
            "n_chains": 1,
        }
    per = [config.n_networks // n_chains] * n_chains
    for k in range(config.n_networks % n_chains):
        per[k] += 1
    children = np.random.SeedSequence(config.seed).spawn(n_chains)
    jobs = []
    for k in range(n_chains):
        if per[k] == 0:
            continue
        cfg = replace(config, n_networks=per[k], seed=children[k])
        jobs.append((model, theta, nodes, dyads, init, cfg, keep_networks))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_chain_worker, jobs))
    else:
        results = [_chain_worker(j) for j in jobs]
    networks = []
    sums = []
    accepted = proposals = nonfinite = 0
    for nets, ss, acc, props, nf in results:
        if keep_networks:
            networks.extend(nets)
        sums.append(ss)
        accepted += acc
        proposals += props
        nonfinite += nf
    return networks, np.concatenate(sums), {
        "acceptance_rate": accepted / proposals if proposals else 0.0,
        "n_nonfinite": nonfinite,
        "n_chains": n_chains,
    }


# -- adequacy ------------------------------------------------------------------

@dataclass
class AdequacyReport:
    """Observed versus simulated per-node in/out volumes.

    Envelopes are the min/max plus the 2.5%/97.5% quantile band over the
    simulated networks; correlations are Pearson correlations between the
    observed volumes and the simulated medians.
    """

    node_ids: tuple
    observed_in: np.ndarray
    observed_out: np.ndarray
    in_median: np.ndarray
    in_min: np.ndarray
    in_max: np.ndarray
    in_q025: np.ndarray
    in_q975: np.ndarray
    out_median: np.ndarray
    out_min: np.ndarray
    out_max: np.ndarray
    out_q025: np.ndarray
    out_q975: np.ndarray
    in_correlation: float
    out_correlation: float
    n_networks: int
    sum_lag1_autocorr: float
    degenerate: bool
    warnings: list = field(default_factory=list)

    @property
    def in_outside(self):
        return (self.observed_in < self.in_q025) | (self.observed_in > self.in_q975)

    @property
    def out_outside(self):
        return (self.observed_out < self.out_q025) | (self.observed_out > self.out_q975)

    def to_json_dict(self):
        return {
            "n_networks": self.n_networks,
            "in_correlation": self.in_correlation,
            "out_correlation": self.out_correlation,
            "nodes_outside_in_envelope": int(self.in_outside.sum()),
            "nodes_outside_out_envelope": int(self.out_outside.sum()),
            "n_nodes": len(self.node_ids),
            "sum_lag1_autocorr": self.sum_lag1_autocorr,
            "degenerate": self.degenerate,
            "warnings": list(self.warnings),
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_volume_csv(self, path, direction):
        """Per-node envelope CSV for one direction ("in" or "out")."""
        if direction not in ("in", "out"):
            raise ValidationError("direction must be 'in' or 'out'")
        obs = self.observed_in if direction == "in" else self.observed_out
        med = self.in_median if direction == "in" else self.out_median
        vmin = self.in_min if direction == "in" else self.out_min
        vmax = self.in_max if direction == "in" else self.out_max
        q025 = self.in_q025 if direction == "in" else self.out_q025
        q975 = self.in_q975 if direction == "in" else self.out_q975
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node_id", "observed", "median", "min", "max",
                             "q2.5", "q97.5"])
            for k, node in enumerate(self.node_ids):
                writer.writerow([node, int(obs[k]), repr(float(med[k])),
                                 int(vmin[k]), int(vmax[k]),
                                 repr(float(q025[k])), repr(float(q975[k]))])


def _pearson(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        return float("nan")
    return float(a @ b) / denom


def adequacy_check(model, theta, nodes, dyads, observed, config, init=None,
                   n_chains=1, n_jobs=1):
    """Simulate from the model and compare per-node volumes with ``observed``.

    Chains start at the observed network unless ``init`` is given. Returns
    an :class:`AdequacyReport` with per-node envelopes, outside-envelope
    flags, and the two observed-versus-simulated-median correlations.
    """
    if init is None:
        init = observed
    networks, sums, diag = _simulate_many(
        model, theta, nodes, dyads, init, config, n_chains=n_chains, n_jobs=n_jobs)
    n = observed.n_nodes
    sim_in = np.stack([net.in_volumes() for net in networks]).astype(np.float64)
    sim_out = np.stack([net.out_volumes() for net in networks]).astype(np.float64)

    warnings = []
    degenerate = bool(sim_in.std(axis=0).max() == 0 and sim_out.std(axis=0).max() == 0)
    if degenerate:
        warnings.append("degenerate chain: all simulated volumes identical")
    if diag["n_nonfinite"]:
        warnings.append("%d proposals had non-finite acceptance ratios" % diag["n_nonfinite"])
    autocorr = lag1_autocorrelation(sums)
    if autocorr > 0.1:
        warnings.append("Sum-statistic lag-1 autocorrelation %.3f exceeds 0.1; "
                        "consider a larger thin" % autocorr)

    node_ids = observed.node_ids if observed.node_ids is not None else tuple(range(n))
    in_med = np.median(sim_in, axis=0)
    out_med = np.median(sim_out, axis=0)
    return AdequacyReport(
        node_ids=tuple(node_ids),
        observed_in=observed.in_volumes().astype(np.float64),
        observed_out=observed.out_volumes().astype(np.float64),
        in_median=in_med,
        in_min=sim_in.min(axis=0),
        in_max=sim_in.max(axis=0),
        in_q025=np.quantile(sim_in, 0.025, axis=0),
        in_q975=np.quantile(sim_in, 0.975, axis=0),
        out_median=out_med,
        out_min=sim_out.min(axis=0),
        out_max=sim_out.max(axis=0),
        out_q025=np.quantile(sim_out, 0.025, axis=0),
        out_q975=np.quantile(sim_out, 0.975, axis=0),
        in_correlation=_pearson(observed.in_volumes(), in_med),
        out_correlation=_pearson(observed.out_volumes(), out_med),
        n_networks=len(networks),
        sum_lag1_autocorr=autocorr,
        degenerate=degenerate,
        warnings=warnings,
    )


# -- expected totals and knockouts --------------------------------------------

def _batch_means_se(series):
    x = np.asarray(series, dtype=np.float64)
    m = len(x)
    if m < 2:
        return float("nan")
    b = max(2, int(math.sqrt(m)))
    k = m // b
    if k < 1:
        b, k = m, 1
    batches = x[: b * k].reshape(b, k).mean(axis=1)
    return float(batches.std(ddof=1) / math.sqrt(b))


def _resolve_init(init, nodes, n_nodes):
    if init is not None:
        return init
    if n_nodes is not None:
        return FlowNetwork.empty(int(n_nodes))
    if nodes is not None:
        return FlowNetwork.empty(nodes.n_nodes)
    raise ValidationError("need an init network, a node table, or n_nodes")


def expected_total_flow(model, theta, nodes, dyads, config, init=None,
                        n_nodes=None, n_chains=1, n_jobs=1):
    """Monte-Carlo mean of total flow under the model, with batch-means SE."""
    init = _resolve_init(init, nodes, n_nodes)
    _, sums, _ = _simulate_many(model, theta, nodes, dyads, init, config,
                                n_chains=n_chains, n_jobs=n_jobs,
                                keep_networks=False)
    return float(sums.mean()), _batch_means_se(sums)


@dataclass
class KnockoutReport:
    """Expected totals with selected coefficients zeroed versus as fitted.

    Both scenarios run with the same chain configuration and seed (common
    random numbers), so knocking out an empty label set reproduces the
    baseline exactly.
    """

    zeroed_labels: tuple
    baseline_mean: float
    baseline_se: float
    counterfactual_mean: float
    counterfactual_se: float
    abs_diff: float
    pct_diff: float

    def to_json_dict(self):
        return {
            "zeroed_labels": list(self.zeroed_labels),
            "baseline_mean": self.baseline_mean,
            "baseline_se": self.baseline_se,
            "counterfactual_mean": self.counterfactual_mean,
            "counterfactual_se": self.counterfactual_se,
            "abs_diff": self.abs_diff,
            "pct_diff": self.pct_diff,
        }

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def knockout_experiment(model, theta_fitted, nodes, dyads, zero_labels, config,
                        init=None, n_nodes=None, n_chains=1, n_jobs=1):
    """Zero the named coefficients and compare expected total flow.

    The lagged-flow covariate (when present) stays at its observed values;
    this is a single-period counterfactual, not a re-simulated history.
    """
    theta_fitted = np.asarray(theta_fitted, dtype=np.float64)
    labels = set(zero_labels)
    known = set(model.labels)
    unknown = labels - known
    if unknown:
        raise ValidationError("unknown term labels for knockout: %s"
                              % ", ".join(sorted(unknown)))
    theta_cf = theta_fitted.copy()
    for lab in labels:
        theta_cf[model.index_of(lab)] = 0.0

    init = _resolve_init(init, nodes, n_nodes)
    base_mean, base_se = expected_total_flow(
        model, theta_fitted, nodes, dyads, config, init=init,
        n_chains=n_chains, n_jobs=n_jobs)
    cf_mean, cf_se = expected_total_flow(
        model, theta_cf, nodes, dyads, config, init=init,
        n_chains=n_chains, n_jobs=n_jobs)
    diff = cf_mean - base_mean
    pct = 100.0 * diff / base_mean if base_mean != 0 else float("nan")
    return KnockoutReport(
        zeroed_labels=tuple(sorted(labels)),
        baseline_mean=base_mean,
        baseline_se=base_se,
        counterfactual_mean=cf_mean,
        counterfactual_se=cf_se,
        abs_diff=diff,
        pct_diff=pct,
    )
