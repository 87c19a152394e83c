"""Sparse directed valued networks of non-negative integer flows.

A :class:`FlowNetwork` stores only strictly positive dyad values; an absent
ordered pair means zero flow. Nodes are dense 0-based indices, optionally
carrying a sidecar list of external ids (e.g. FIPS codes). Instances are
immutable after construction and safe to share across threads; simulation
code mutates only private dense copies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "FlowNetwork",
    "NodeTable",
    "DyadCovariateSet",
    "SummaryReport",
    "build_network",
    "summarize",
    "in_volume",
    "out_volume",
    "REGIONS",
    "RACIAL_CATEGORIES",
]

REGIONS = ("Northeast", "South", "West", "Midwest")
RACIAL_CATEGORIES = ("hispanic", "black", "asian", "white", "other")


class FlowNetwork:
    """Directed valued network without self-loops.

    Parameters
    ----------
    n_nodes : int
        Number of nodes; dyads are all ordered pairs (i, j) with i != j.
    edges : mapping
        (i, j) -> value. Values must be positive integers; zero-valued
        entries are not allowed here (drop them before construction, or use
        :func:`build_network`, which drops them for you).
    period_label : str
        Opaque label for the observation window, e.g. "2011-2015".
    node_ids : sequence of str, optional
        External id per node index. Length must equal ``n_nodes``.
    """

    __slots__ = ("n_nodes", "period_label", "node_ids", "_edges",
                 "_src", "_dst", "_val", "_in_vol", "_out_vol")

    def __init__(self, n_nodes, edges, period_label="", node_ids=None):
        n_nodes = int(n_nodes)
        if n_nodes < 1:
            raise ValidationError("n_nodes must be >= 1, got %d" % n_nodes)
        if node_ids is not None:
            node_ids = tuple(str(x) for x in node_ids)
            if len(node_ids) != n_nodes:
                raise ValidationError(
                    "node_ids has %d entries for %d nodes" % (len(node_ids), n_nodes))
        store = {}
        for (i, j), v in dict(edges).items():
            i = int(i)
            j = int(j)
            if i == j:
                raise ValidationError("self-loop (%d, %d) is not allowed" % (i, j))
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise ValidationError("dyad (%d, %d) out of range for %d nodes" % (i, j, n_nodes))
            iv = int(v)
            if iv != v or iv < 1:
                raise ValidationError(
                    "flow value for (%d, %d) must be a positive integer, got %r" % (i, j, v))
            store[(i, j)] = iv
        self.n_nodes = n_nodes
        self.period_label = str(period_label)
        self.node_ids = node_ids
        self._edges = store
        if store:
            keys = sorted(store)
            self._src = np.array([k[0] for k in keys], dtype=np.int64)
            self._dst = np.array([k[1] for k in keys], dtype=np.int64)
            self._val = np.array([store[k] for k in keys], dtype=np.int64)
        else:
            self._src = np.empty(0, dtype=np.int64)
            self._dst = np.empty(0, dtype=np.int64)
            self._val = np.empty(0, dtype=np.int64)
        self._in_vol = np.bincount(self._dst, weights=self._val,
                                   minlength=n_nodes).astype(np.int64)
        self._out_vol = np.bincount(self._src, weights=self._val,
                                    minlength=n_nodes).astype(np.int64)
        for arr in (self._src, self._dst, self._val, self._in_vol, self._out_vol):
            arr.flags.writeable = False

    # -- constructors ------------------------------------------------------

    @classmethod
    def empty(cls, n_nodes, period_label="", node_ids=None):
        return cls(n_nodes, {}, period_label=period_label, node_ids=node_ids)

    @classmethod
    def from_dense(cls, matrix, period_label="", node_ids=None):
        """Build from a dense (n, n) array; the diagonal must be zero."""
        m = np.asarray(matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("dense flow matrix must be square")
        if np.any(np.diagonal(m)):
            raise ValidationError("dense flow matrix has nonzero diagonal entries")
        ii, jj = np.nonzero(m)
        edges = {(int(i), int(j)): int(m[i, j]) for i, j in zip(ii, jj)}
        return cls(m.shape[0], edges, period_label=period_label, node_ids=node_ids)

    # -- basic queries -----------------------------------------------------

    @property
    def n_edges(self):
        return len(self._edges)

    @property
    def n_dyads(self):
        return self.n_nodes * (self.n_nodes - 1)

    @property
    def total_flow(self):
        return int(self._val.sum())

    @property
    def density(self):
        return self.n_edges / self.n_dyads if self.n_dyads else 0.0

    @property
    def max_value(self):
        return int(self._val.max()) if self.n_edges else 0

    def value(self, i, j):
        """Flow on the ordered dyad (i, j); absent entries are 0."""
        self._check_node(i)
        self._check_node(j)
        return self._edges.get((int(i), int(j)), 0)

    def in_volume(self, node):
        self._check_node(node)
        return int(self._in_vol[node])

    def out_volume(self, node):
        self._check_node(node)
        return int(self._out_vol[node])

    def in_volumes(self):
        """Per-node total inflow as a read-only int64 array."""
        return self._in_vol

    def out_volumes(self):
        return self._out_vol

    def edge_arrays(self):
        """(src, dst, val) read-only arrays sorted by (src, dst)."""
        return self._src, self._dst, self._val

    def edge_dict(self):
        """Copy of the sparse edge map."""
        return dict(self._edges)

    def items(self):
        for k in sorted(self._edges):
            yield k, self._edges[k]

    def dense_matrix(self, dtype=np.int64):
        """Dense (n, n) value matrix. Intended for small networks and for
        brute-force cross-checks; memory is O(n^2)."""
        m = np.zeros((self.n_nodes, self.n_nodes), dtype=dtype)
        m[self._src, self._dst] = self._val
        return m

    def to_edge_records(self):
        """Edge list of (origin, destination, count) using external ids when
        available, else integer indices."""
        ids = self.node_ids
        if ids is None:
            return [(int(i), int(j), int(v)) for (i, j), v in self.items()]
        return [(ids[i], ids[j], int(v)) for (i, j), v in self.items()]

    def copy(self):
        return FlowNetwork(self.n_nodes, self._edges,
                           period_label=self.period_label, node_ids=self.node_ids)

    def _check_node(self, node):
        if not (0 <= int(node) < self.n_nodes):
            raise ValidationError("node %r out of range for %d nodes" % (node, self.n_nodes))

    def __eq__(self, other):
        if not isinstance(other, FlowNetwork):
            return NotImplemented
        return self.n_nodes == other.n_nodes and self._edges == other._edges

    def __hash__(self):
        return hash((self.n_nodes, frozenset(self._edges.items())))

    def __repr__(self):
        return "FlowNetwork(n_nodes=%d, n_edges=%d, total_flow=%d%s)" % (
            self.n_nodes, self.n_edges, self.total_flow,
            ", period=%r" % self.period_label if self.period_label else "")


def build_network(records, n_nodes=None, node_ids=None, period_label=""):
    """Assemble a :class:`FlowNetwork` from (origin, destination, count) records.

    Zero-count records are dropped. Duplicate ordered pairs, self-loops,
    negative counts, and unresolvable ids are rejected.

    Parameters
    ----------
    records : iterable of (origin, destination, count)
        Origins/destinations are either integer node indices (when
        ``node_ids`` is None) or external ids resolved through ``node_ids``.
    n_nodes : int, optional
        Node count when ids are integer indices; inferred from the largest
        index when omitted.
    node_ids : sequence of str, optional
        External id per node index; defines both the id map and ``n_nodes``.
    """
    records = list(records)
    if node_ids is not None:
        node_ids = [str(x) for x in node_ids]
        index = {x: k for k, x in enumerate(node_ids)}
        if len(index) != len(node_ids):
            raise ValidationError("node_ids contains duplicates")
        if n_nodes is not None and int(n_nodes) != len(node_ids):
            raise ValidationError("n_nodes disagrees with len(node_ids)")
        n_nodes = len(node_ids)

        def resolve(x):
            try:
                return index[str(x)]
            except KeyError:
                raise ValidationError("unknown node id %r" % (x,)) from None
    else:
        if n_nodes is None:
            top = -1
            for o, d, _ in records:
                top = max(top, int(o), int(d))
            n_nodes = top + 1 if top >= 0 else 1

        def resolve(x):
            k = int(x)
            if not (0 <= k < n_nodes):
                raise ValidationError("node index %r out of range for %d nodes" % (x, n_nodes))
            return k

    edges = {}
    for o, d, c in records:
        c = int(c)
        if c < 0:
            raise ValidationError("negative count %d for record (%r, %r)" % (c, o, d))
        i, j = resolve(o), resolve(d)
        if i == j:
            raise ValidationError("self-loop record (%r, %r)" % (o, d))
        if c == 0:
            continue
        if (i, j) in edges:
            raise ValidationError("duplicate record for ordered pair (%r, %r)" % (o, d))
        edges[(i, j)] = c
    return FlowNetwork(n_nodes, edges, period_label=period_label,
                       node_ids=tuple(node_ids) if node_ids is not None else None)


@dataclass(frozen=True)
class SummaryReport:
    """Descriptive statistics of one flow network.

    ``mean_degree`` is the Freeman total degree 2E/n; ``mean_flow_per_node``
    sums mean in- and out-migrants, i.e. 2 * total / n.
    """

    vertices: int
    edges: int
    density: float
    mean_degree: float
    total_flow: int
    mean_flow_per_node: float
    mean_flow_per_edge: float
    period_label: str = ""

    def to_dict(self):
        return {
            "vertices": self.vertices,
            "edges": self.edges,
            "density": self.density,
            "mean_degree": self.mean_degree,
            "total_flow": self.total_flow,
            "mean_flow_per_node": self.mean_flow_per_node,
            "mean_flow_per_edge": self.mean_flow_per_edge,
            "period_label": self.period_label,
        }


def summarize(network):
    """Network-level descriptive statistics (vertices, edges, density,
    mean total degree, total flow, per-node and per-edge means)."""
    n = network.n_nodes
    e = network.n_edges
    total = network.total_flow
    return SummaryReport(
        vertices=n,
        edges=e,
        density=network.density,
        mean_degree=2.0 * e / n,
        total_flow=total,
        mean_flow_per_node=2.0 * total / n,
        mean_flow_per_edge=total / e if e else 0.0,
        period_label=network.period_label,
    )


def in_volume(network, node):
    """Total flow into ``node`` summed over stored edges."""
    return network.in_volume(node)


def out_volume(network, node):
    """Total flow out of ``node`` summed over stored edges."""
    return network.out_volume(node)


# -- covariate tables --------------------------------------------------------

_PCT_FIELDS = ("renter_pct", "highered_pct", "unemployment_pct", "rural_pct",
               "democrat_poll_pct")


class NodeTable:
    """Per-node covariates, indexed like the network's nodes.

    Percent fields are stored on the 0..100 scale they arrive in; model
    covariates derived from them (see :meth:`covariate`) are proportions in
    [0, 1] so that coefficient magnitudes stay comparable across terms.
    Racial shares are ordered (hispanic, black, asian, white, other) and
    must sum to 1 per node.
    """

    def __init__(self, ids, state, region, population, density, psr,
                 racial_shares, renter_pct, highered_pct, unemployment_pct,
                 rural_pct, democrat_poll_pct, immigrant_inflow):
        self.ids = tuple(str(x) for x in ids)
        n = len(self.ids)
        if len(set(self.ids)) != n:
            raise ValidationError("duplicate node ids in node table")
        self.state = np.asarray([str(s) for s in state], dtype=object)
        self.region = np.asarray([str(r) for r in region], dtype=object)
        self.population = np.asarray(population, dtype=np.int64)
        self.density = np.asarray(density, dtype=np.float64)
        self.psr = np.asarray(psr, dtype=np.float64)
        self.racial_shares = np.asarray(racial_shares, dtype=np.float64)
        self.renter_pct = np.asarray(renter_pct, dtype=np.float64)
        self.highered_pct = np.asarray(highered_pct, dtype=np.float64)
        self.unemployment_pct = np.asarray(unemployment_pct, dtype=np.float64)
        self.rural_pct = np.asarray(rural_pct, dtype=np.float64)
        self.democrat_poll_pct = np.asarray(democrat_poll_pct, dtype=np.float64)
        self.immigrant_inflow = np.asarray(immigrant_inflow, dtype=np.int64)

        for name in ("state", "region", "population", "density", "psr",
                     "renter_pct", "highered_pct", "unemployment_pct",
                     "rural_pct", "democrat_poll_pct", "immigrant_inflow"):
            if len(getattr(self, name)) != n:
                raise ValidationError("column %s has %d rows for %d nodes"
                                      % (name, len(getattr(self, name)), n))
        if self.racial_shares.shape != (n, 5):
            raise ValidationError("racial_shares must be (n, 5), got %r"
                                  % (self.racial_shares.shape,))
        bad_region = [r for r in set(self.region) if r not in REGIONS]
        if bad_region:
            raise ValidationError("unknown region values %r; expected %r"
                                  % (sorted(bad_region), list(REGIONS)))
        if np.any(self.population < 1):
            raise ValidationError("population must be a positive integer for every node")
        if np.any(self.density < 0) or np.any(self.psr < 0):
            raise ValidationError("density and psr must be non-negative")
        if np.any(self.immigrant_inflow < 0):
            raise ValidationError("immigrant_inflow must be non-negative")
        if np.any(self.racial_shares < 0):
            raise ValidationError("racial shares must be non-negative")
        sums = self.racial_shares.sum(axis=1)
        off = np.flatnonzero(np.abs(sums - 1.0) > 1e-9)
        if len(off):
            raise ValidationError(
                "racial shares must sum to 1; offending nodes: %s"
                % ", ".join("%s (sum=%.6f)" % (self.ids[k], sums[k]) for k in off[:10]))
        for name in _PCT_FIELDS:
            col = getattr(self, name)
            if np.any((col < 0) | (col > 100)):
                raise ValidationError("%s must lie in [0, 100]" % name)

    @property
    def n_nodes(self):
        return len(self.ids)

    def index_of(self, node_id):
        try:
            return self.ids.index(str(node_id))
        except ValueError:
            raise ValidationError("unknown node id %r" % (node_id,)) from None

    _COVARIATES = (
        "log_population", "log_density", "psr", "population", "density",
        "share_hispanic", "share_black", "share_asian", "share_white",
        "share_other", "renter", "highered", "unemployment", "rural",
        "democrat", "log_immigrant_inflow", "immigrant_inflow",
        "northeast", "south", "west", "midwest",
    )

    def covariate(self, name):
        """Resolve a model covariate by name.

        Percent fields become proportions; ``log_immigrant_inflow`` uses
        log(1 + x) because zero inflows occur; region names give 0/1
        dummies.
        """
        if name == "log_population":
            return np.log(self.population.astype(np.float64))
        if name == "log_density":
            if np.any(self.density <= 0):
                bad = np.flatnonzero(self.density <= 0)[:10]
                raise ValidationError(
                    "log_density needs positive density; offending nodes: %s"
                    % ", ".join(self.ids[k] for k in bad))
            return np.log(self.density)
        if name in ("psr", "population", "density"):
            return np.asarray(getattr(self, name), dtype=np.float64)
        if name.startswith("share_"):
            cat = name[len("share_"):]
            if cat in RACIAL_CATEGORIES:
                return self.racial_shares[:, RACIAL_CATEGORIES.index(cat)]
        if name in ("renter", "highered", "unemployment", "rural", "democrat"):
            field = "democrat_poll_pct" if name == "democrat" else name + "_pct"
            return getattr(self, field) / 100.0
        if name == "log_immigrant_inflow":
            return np.log1p(self.immigrant_inflow.astype(np.float64))
        if name == "immigrant_inflow":
            return self.immigrant_inflow.astype(np.float64)
        if name in ("northeast", "south", "west", "midwest"):
            return (self.region == name.capitalize()).astype(np.float64)
        raise ValidationError(
            "unknown node covariate %r; known names: %s"
            % (name, ", ".join(self._COVARIATES)))


_SYMMETRIC_DYAD = ("political_dissim", "rural_dissim", "racial_dissim",
                   "same_state", "log_distance")
_ANTISYMMETRIC_DYAD = ("unemp_diff",)


class DyadCovariateSet:
    """Named (n, n) matrices of ordered-pair covariates.

    Entry (i, j) describes the dyad from origin i to destination j; the
    diagonal is ignored. Recognized names are validated on construction:
    the three dissimilarity scores must be symmetric and lie in [0, 1],
    ``unemp_diff`` must be antisymmetric, ``same_state`` binary,
    ``lagged_log_flow`` non-negative.
    """

    def __init__(self, n_nodes, matrices):
        self.n_nodes = int(n_nodes)
        self._matrices = {}
        for name, m in dict(matrices).items():
            m = np.asarray(m, dtype=np.float64)
            if m.shape != (self.n_nodes, self.n_nodes):
                raise ValidationError("matrix %r has shape %r, expected (%d, %d)"
                                      % (name, m.shape, self.n_nodes, self.n_nodes))
            if not np.all(np.isfinite(m)):
                raise ValidationError("matrix %r contains non-finite entries" % name)
            m = m.copy()
            np.fill_diagonal(m, 0.0)
            if name in _SYMMETRIC_DYAD and not np.array_equal(m, m.T):
                raise ValidationError("matrix %r must be symmetric" % name)
            if name in _ANTISYMMETRIC_DYAD and not np.array_equal(m, -m.T):
                raise ValidationError("matrix %r must be antisymmetric" % name)
            if name.endswith("_dissim") and (m.min() < 0 or m.max() > 1):
                raise ValidationError("matrix %r must lie in [0, 1]" % name)
            if name == "same_state" and not np.all(np.isin(m, (0.0, 1.0))):
                raise ValidationError("same_state must be 0/1")
            if name == "lagged_log_flow" and m.min() < 0:
                raise ValidationError("lagged_log_flow must be non-negative")
            m.flags.writeable = False
            self._matrices[name] = m

    @property
    def names(self):
        return tuple(sorted(self._matrices))

    def has(self, name):
        return name in self._matrices

    def matrix(self, name):
        try:
            return self._matrices[name]
        except KeyError:
            raise ValidationError(
                "unknown dyad covariate %r; available: %s"
                % (name, ", ".join(self.names) or "(none)")) from None

    def value(self, name, i, j):
        return float(self.matrix(name)[i, j])
