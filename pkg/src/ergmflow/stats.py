"""Sufficient statistics of count-valued network models.

A model is an ordered list of terms; each term maps a network (plus node and
dyad covariate tables) to one real statistic. The joint probability of a
network y is proportional to ``exp(theta . g(y)) / prod_ij y_ij!``, so the
zero-coefficient baseline is independent Poisson(1) dyads.

Term kinds
----------
sum             total flow, sum_ij y_ij (the intercept-like term)
nonzero         number of dyads with positive flow (zero-inflation control)
mutual_min      sum over unordered pairs {i, j} of min(y_ij, y_ji)
waypoint_flow   sum over nodes of min(out_volume, in_volume)
node_out        sum_ij y_ij * c_i for a named node covariate c
node_in         sum_ij y_ij * c_j
dyad            sum_ij y_ij * d_ij for a named dyad covariate d
lagged_log_flow sum_ij y_ij * log(1 + previous-period flow ij)

All but ``nonzero``, ``mutual_min`` and ``waypoint_flow`` are affine in any
single dyad value, which the estimator and sampler exploit: the conditional
distribution of one dyad given the rest depends on theta only through a
per-dyad linear rate plus the three nonlinear local contributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "TermSpec",
    "ModelSpec",
    "LINEAR_KINDS",
    "NONLINEAR_KINDS",
    "TERM_KINDS",
    "mutual_min_stat",
    "waypoint_flow_stat",
    "global_statistic",
    "statistic_vector",
    "conditional_profile",
    "ChangeStats",
    "model_to_dict",
    "model_from_dict",
]

LINEAR_KINDS = ("sum", "node_out", "node_in", "dyad", "lagged_log_flow")
NONLINEAR_KINDS = ("nonzero", "mutual_min", "waypoint_flow")
TERM_KINDS = LINEAR_KINDS + NONLINEAR_KINDS

_NEEDS_COVARIATE = ("node_out", "node_in", "dyad")


@dataclass(frozen=True)
class TermSpec:
    """One model term: a kind plus, for covariate kinds, a covariate name.

    ``label`` defaults to ``kind`` or ``kind:covariate`` and must be unique
    within a model.
    """

    kind: str
    covariate: str | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in TERM_KINDS:
            raise ValidationError(
                "unknown term kind %r; expected one of %s" % (self.kind, ", ".join(TERM_KINDS)))
        if self.kind in _NEEDS_COVARIATE:
            if not self.covariate:
                raise ValidationError("term kind %r requires a covariate name" % self.kind)
        elif self.covariate:
            raise ValidationError("term kind %r does not take a covariate" % self.kind)
        if not self.label:
            default = self.kind if not self.covariate else "%s:%s" % (self.kind, self.covariate)
            object.__setattr__(self, "label", default)


@dataclass(frozen=True)
class ModelSpec:
    """Ordered term list defining the sufficient statistic vector."""

    terms: tuple[TermSpec, ...]
    lag_depth: int = 1

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValidationError("a model needs at least one term")
        if self.lag_depth != 1:
            raise ValidationError("only lag_depth=1 is supported")
        labels = [t.label for t in self.terms]
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate term labels: %r" % (labels,))
        for kind in ("sum", "nonzero"):
            if sum(t.kind == kind for t in self.terms) > 1:
                raise ValidationError("at most one %r term is allowed" % kind)

    @property
    def labels(self):
        return tuple(t.label for t in self.terms)

    @property
    def n_terms(self):
        return len(self.terms)

    @property
    def has_lag(self):
        return any(t.kind == "lagged_log_flow" for t in self.terms)

    def index_of(self, label):
        for k, t in enumerate(self.terms):
            if t.label == label:
                return k
        raise ValidationError("no term labelled %r in model" % label)


def model_to_dict(model):
    return {
        "terms": [
            {"kind": t.kind, "covariate": t.covariate, "label": t.label}
            for t in model.terms
        ],
        "lag_depth": model.lag_depth,
    }


def model_from_dict(d):
    try:
        terms = tuple(
            TermSpec(kind=t["kind"], covariate=t.get("covariate"), label=t.get("label") or "")
            for t in d["terms"]
        )
        return ModelSpec(terms=terms, lag_depth=int(d.get("lag_depth", 1)))
    except (KeyError, TypeError) as exc:
        raise ValidationError("malformed model spec: %s" % exc) from exc


# -- global statistics -----------------------------------------------------

def mutual_min_stat(network):
    """Sum over unordered pairs of the smaller of the two opposing flows.

    Each unordered pair {i, j} is counted once (tie-break i < j); a pair with
    flow in only one direction contributes 0.
    """
    edges = network.edge_dict()
    total = 0
    for (i, j), v in edges.items():
        if i < j:
            total += min(v, edges.get((j, i), 0))
    return total


def waypoint_flow_stat(network):
    """Sum over nodes of min(total outflow, total inflow).

    The per-node minimum is the volume that passes through the node; a node
    that only sends or only receives contributes 0.
    """
    return int(np.minimum(network.in_volumes(), network.out_volumes()).sum())


def _resolve_node_covariate(nodes, name):
    if nodes is None:
        raise ValidationError("node covariate %r requested but no node table supplied" % name)
    return np.asarray(nodes.covariate(name), dtype=np.float64)


def _resolve_dyad_matrix(dyads, name):
    if dyads is None:
        raise ValidationError("dyad covariate %r requested but no dyad covariates supplied" % name)
    return np.asarray(dyads.matrix(name), dtype=np.float64)


def global_statistic(term, network, nodes=None, dyads=None):
    """Evaluate one term on a whole network. Returns a float."""
    src, dst, val = network.edge_arrays()
    v = val.astype(np.float64)
    kind = term.kind
    if kind == "sum":
        return float(v.sum())
    if kind == "nonzero":
        return float(len(v))
    if kind == "mutual_min":
        return float(mutual_min_stat(network))
    if kind == "waypoint_flow":
        return float(waypoint_flow_stat(network))
    if kind == "node_out":
        c = _resolve_node_covariate(nodes, term.covariate)
        return float(v @ c[src])
    if kind == "node_in":
        c = _resolve_node_covariate(nodes, term.covariate)
        return float(v @ c[dst])
    if kind == "dyad":
        m = _resolve_dyad_matrix(dyads, term.covariate)
        return float(v @ m[src, dst])
    if kind == "lagged_log_flow":
        m = _resolve_dyad_matrix(dyads, "lagged_log_flow")
        return float(v @ m[src, dst])
    raise ValidationError("unknown term kind %r" % kind)


def statistic_vector(model, network, nodes=None, dyads=None):
    """The full statistic vector g(y), one component per model term."""
    return np.array(
        [global_statistic(t, network, nodes, dyads) for t in model.terms],
        dtype=np.float64)


# -- change statistics -----------------------------------------------------

class ChangeStats:
    """Vectorized single-dyad change statistics over a fixed network.

    Precomputes everything needed to evaluate, for batches of dyads (i, j)
    and candidate values v, the statistic contributions that move when y_ij
    is set to v while the rest of the network stays at its observed values.
    Linear terms contribute x_ij * v with a per-dyad unit change x_ij; the
    nonlinear terms contribute the local profiles below.

    Shared by the pseudo-likelihood estimator and by
    :func:`conditional_profile`; instances are read-only once built.
    """

    def __init__(self, model, network, nodes=None, dyads=None):
        self.model = model
        self.network = network
        self.n_nodes = network.n_nodes
        self.values = network.dense_matrix(dtype=np.int64)
        self.out_vol = network.out_volumes().astype(np.float64)
        self.in_vol = network.in_volumes().astype(np.float64)
        self.lin_pos = []
        self.lin_payload = []
        self.nonlin = []  # (position, kind)
        for pos, term in enumerate(model.terms):
            if term.kind in NONLINEAR_KINDS:
                self.nonlin.append((pos, term.kind))
                continue
            self.lin_pos.append(pos)
            if term.kind == "sum":
                self.lin_payload.append(("const", None))
            elif term.kind == "node_out":
                self.lin_payload.append(("row", _resolve_node_covariate(nodes, term.covariate)))
            elif term.kind == "node_in":
                self.lin_payload.append(("col", _resolve_node_covariate(nodes, term.covariate)))
            elif term.kind == "dyad":
                self.lin_payload.append(("mat", _resolve_dyad_matrix(dyads, term.covariate)))
            else:  # lagged_log_flow
                self.lin_payload.append(("mat", _resolve_dyad_matrix(dyads, "lagged_log_flow")))
        self.lin_pos = np.array(self.lin_pos, dtype=np.intp)
        self.nonlin_pos = np.array([p for p, _ in self.nonlin], dtype=np.intp)

    @property
    def n_linear(self):
        return len(self.lin_payload)

    def observed_values(self, ii, jj):
        return self.values[ii, jj]

    def reciprocal_values(self, ii, jj):
        return self.values[jj, ii]

    def linear_design(self, ii, jj):
        """Per-unit change of each linear term on the given dyads: (D, L)."""
        d = len(ii)
        out = np.empty((d, self.n_linear), dtype=np.float64)
        for k, (how, payload) in enumerate(self.lin_payload):
            if how == "const":
                out[:, k] = 1.0
            elif how == "row":
                out[:, k] = payload[ii]
            elif how == "col":
                out[:, k] = payload[jj]
            else:
                out[:, k] = payload[ii, jj]
        return out

    def nonlinear_profiles(self, ii, jj, vgrid):
        """Local contribution of each nonlinear term on a value grid.

        Returns a list of (term position, (D, len(vgrid)) array). The
        waypoint profile uses rest-of-network volumes, i.e. the observed
        volumes with the focal dyad's own value removed.
        """
        y_obs = self.values[ii, jj].astype(np.float64)
        out = []
        vrow = vgrid[None, :].astype(np.float64)
        for pos, kind in self.nonlin:
            if kind == "nonzero":
                prof = np.broadcast_to((vgrid > 0).astype(np.float64),
                                       (len(ii), len(vgrid))).copy()
            elif kind == "mutual_min":
                yrec = self.values[jj, ii].astype(np.float64)
                prof = np.minimum(vrow, yrec[:, None])
            else:  # waypoint_flow
                out_rest_i = self.out_vol[ii] - y_obs
                in_rest_j = self.in_vol[jj] - y_obs
                prof = (np.minimum(out_rest_i[:, None] + vrow, self.in_vol[ii][:, None])
                        + np.minimum(self.out_vol[jj][:, None], in_rest_j[:, None] + vrow))
            out.append((pos, prof))
        return out

    def nonlinear_at_observed(self, ii, jj):
        """Local contribution of each nonlinear term at the observed values."""
        y_obs = self.values[ii, jj].astype(np.float64)
        out = []
        for pos, kind in self.nonlin:
            if kind == "nonzero":
                vals = (y_obs > 0).astype(np.float64)
            elif kind == "mutual_min":
                vals = np.minimum(y_obs, self.values[jj, ii].astype(np.float64))
            else:
                vals = (np.minimum(self.out_vol[ii], self.in_vol[ii])
                        + np.minimum(self.out_vol[jj], self.in_vol[jj]))
            out.append((pos, vals))
        return out


def conditional_profile(model, network, nodes, dyads, dyad, v_max):
    """Statistic vectors as one dyad's value sweeps 0..v_max.

    Row v holds g evaluated on the network with y_ij set to v and every other
    dyad frozen at its observed value. Rows are built incrementally from the
    observed statistic vector and local change profiles, not by recomputing
    each statistic from scratch.

    Returns an array of shape (v_max + 1, n_terms).
    """
    i, j = dyad
    if i == j:
        raise ValidationError("conditional profile needs an off-diagonal dyad, got (%r, %r)" % (i, j))
    if v_max < 0:
        raise ValidationError("v_max must be >= 0, got %r" % (v_max,))
    network._check_node(i)
    network._check_node(j)
    base = statistic_vector(model, network, nodes, dyads)
    cs = ChangeStats(model, network, nodes, dyads)
    ii = np.array([i], dtype=np.intp)
    jj = np.array([j], dtype=np.intp)
    vgrid = np.arange(v_max + 1, dtype=np.int64)
    y_obs = float(cs.observed_values(ii, jj)[0])

    prof = np.tile(base, (v_max + 1, 1))
    x = cs.linear_design(ii, jj)[0]
    for k, pos in enumerate(cs.lin_pos):
        prof[:, pos] += x[k] * (vgrid - y_obs)
    nl_profiles = cs.nonlinear_profiles(ii, jj, vgrid)
    nl_observed = dict(cs.nonlinear_at_observed(ii, jj))
    for pos, local in nl_profiles:
        prof[:, pos] += local[0] - float(nl_observed[pos][0])
    return prof


def log_factorial(v):
    """log(v!) for scalar or array v."""
    from scipy.special import gammaln

    return gammaln(np.asarray(v, dtype=np.float64) + 1.0)


def _scalar_log_factorial(v):
    return math.lgamma(v + 1.0)
