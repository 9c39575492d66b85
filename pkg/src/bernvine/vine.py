"""C- and D-vine copulas built from parametric or Bernstein pair-copulas.

Edge layout (0-based tree index ``t``, variable positions in ``order``):

* C-vine: edge ``(t, k)`` joins ``order[t]`` (the root of tree ``t``) and
  ``order[t + 1 + k]`` given ``order[:t]``.
* D-vine: edge ``(t, i)`` joins ``order[i]`` and ``order[i + t + 1]`` given
  the positions strictly between them.

The first copula argument is always the variable listed first above, so
``h(v, u)`` conditions the second variable on the first.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import bernstein
from .bernstein import BernsteinCopula
from .empirical import PseudoSample, kendall_matrix
from .families import (CANDIDATE_FAMILIES, INDEPENDENCE, FamilyId, ParametricPairCopula,
                       fit_ml)
from ._roots import RootFindingError

TRANSFORM_CLIP = 1e-6
FORMAT_VERSION = 1
_HEADER = "bernvine-vine"


class VineEvaluationError(ArithmeticError):
    """Non-finite result attributable to a specific edge."""

    def __init__(self, message, edge=None):
        super().__init__(message)
        self.edge = edge


@dataclass(frozen=True)
class VineStructure:
    """Vine type and variable order.

    Parameters
    ----------
    kind : {'C', 'D'}
    order : sequence of int
        Permutation of ``0..d-1``; for a C-vine ``order[t]`` is the root of
        tree ``t``, for a D-vine it is the path of the first tree.
    """

    kind: str
    order: tuple

    def __post_init__(self):
        kind = str(self.kind).upper()
        if kind not in ("C", "D"):
            raise ValueError(f"vine kind must be 'C' or 'D', got {self.kind!r}")
        order = tuple(int(i) for i in self.order)
        if len(order) < 2 or sorted(order) != list(range(len(order))):
            raise ValueError(f"order must be a permutation of 0..d-1 with d >= 2, got {order}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "order", order)

    @property
    def d(self):
        return len(self.order)

    def edge_variables(self, t, k):
        """(first, second, conditioning) variable labels of edge ``(t, k)``."""
        o = self.order
        if self.kind == "C":
            return o[t], o[t + 1 + k], tuple(o[:t])
        return o[k], o[k + t + 1], tuple(o[k + 1:k + t + 1])

    def edge_label(self, t, k):
        a, b, cond = self.edge_variables(t, k)
        label = f"{a + 1},{b + 1}"
        if cond:
            label += "|" + ",".join(str(c + 1) for c in cond)
        return label

    def edge_index(self):
        """All ``(t, k)`` pairs in tree order."""
        return [(t, k) for t in range(self.d - 1) for k in range(self.d - 1 - t)]


@dataclass(frozen=True)
class VineModel:
    """A vine structure with one pair-copula per edge.

    ``edges[t][k]`` is the copula of edge ``(t, k)``; tree ``t`` holds
    ``d - 1 - t`` edges.
    """

    structure: VineStructure
    edges: tuple

    def __post_init__(self):
        edges = tuple(tuple(level) for level in self.edges)
        d = self.structure.d
        if len(edges) != d - 1 or any(len(lv) != d - 1 - t for t, lv in enumerate(edges)):
            raise ValueError("edge layout does not match the structure")
        object.__setattr__(self, "edges", edges)

    @property
    def d(self):
        return self.structure.d

    def edge(self, t, k):
        return self.edges[t][k]

    def log_density(self, u):
        return log_density(self, u)

    def simulate(self, n, rng):
        return simulate(self, n, rng)


@dataclass
class FitEvent:
    tree: int
    edge: int
    label: str
    family: str
    message: str


@dataclass
class FitReport:
    """Per-edge outcomes of a sequential fit.

    ``unstable`` is set when some edge had no usable candidate or its
    selected fit did not converge.
    """

    selected: list = field(default_factory=list)
    events: list = field(default_factory=list)
    unstable: bool = False

    @property
    def reasons(self):
        return [f"{e.label} {e.family}: {e.message}" for e in self.events]


def independence_vine(structure):
    d = structure.d
    return VineModel(structure, [[INDEPENDENCE] * (d - 1 - t) for t in range(d - 1)])


# -- tree recursion ----------------------------------------------------------


def _as_array(u, d=None):
    u = u.u if isinstance(u, PseudoSample) else np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[None, :]
    if d is not None and u.shape[1] != d:
        raise ValueError(f"expected {d} columns, got {u.shape[1]}")
    return u


def _tree_pass(structure, u, get_edge, clip=None):
    """Walk the trees, calling ``get_edge(t, k, a, b)`` on each edge's arguments.

    Returns the summed log-density and the copulas returned by ``get_edge``.
    """
    d = structure.d
    order = structure.order
    clipf = (lambda x: np.clip(x, clip, 1.0 - clip)) if clip else (lambda x: x)
    total = np.zeros(u.shape[0])
    edges = []
    if structure.kind == "C":
        v = [u[:, order[j]] for j in range(d)]
        for t in range(d - 1):
            root = v[0]
            level, nxt = [], []
            for k in range(d - 1 - t):
                c = get_edge(t, k, root, v[k + 1])
                level.append(c)
                total += _checked_logpdf(c, root, v[k + 1], structure, t, k)
                if t < d - 2:
                    nxt.append(clipf(c.h(v[k + 1], root)))
            edges.append(level)
            v = nxt
    else:
        a = [u[:, order[i]] for i in range(d - 1)]
        b = [u[:, order[i + 1]] for i in range(d - 1)]
        for t in range(d - 1):
            level = []
            for i in range(d - 1 - t):
                c = get_edge(t, i, a[i], b[i])
                level.append(c)
                total += _checked_logpdf(c, a[i], b[i], structure, t, i)
            edges.append(level)
            if t < d - 2:
                a, b = ([clipf(level[i].h_rev(a[i], b[i])) for i in range(d - 2 - t)],
                        [clipf(level[i + 1].h(b[i + 1], a[i + 1])) for i in range(d - 2 - t)])
    return total, edges


def _checked_logpdf(c, a, b, structure, t, k):
    val = np.asarray(c.log_density(a, b), dtype=float)
    if not np.all(np.isfinite(val)):
        raise VineEvaluationError(
            f"non-finite log density on edge {structure.edge_label(t, k)}", (t, k))
    return val


def log_density(model, u):
    """Vine copula log-density at each row of ``u``.

    Raises
    ------
    VineEvaluationError
        If an edge yields a non-finite contribution.
    """
    u = _as_array(u, model.d)
    total, _ = _tree_pass(model.structure, u, lambda t, k, a, b: model.edges[t][k])
    return total


def rosenblatt(model, u):
    """Map a sample to independent uniforms, column ``j`` in position order.

    ``w[:, j] = F(x_{order[j]} | x_{order[0]}, ..., x_{order[j-1]})``.
    """
    u = _as_array(u, model.d)
    s = model.structure
    E = model.edges
    x = [u[:, s.order[j]] for j in range(s.d)]
    w = np.empty_like(u)
    if s.kind == "C":
        for j in range(s.d):
            v = x[j]
            for t in range(j):
                v = E[t][j - t - 1].h(v, w[:, t])
            w[:, j] = v
        return w
    a = {}
    for j in range(s.d):
        beta = [x[j]]
        for t in range(j):
            beta.append(E[t][j - t - 1].h(beta[t], a[t, j - t - 1]))
        w[:, j] = beta[j]
        _advance_dvine(E, a, j, x[j], beta)
    return w


def _advance_dvine(E, a, j, xj, beta):
    # a[t, i] = F(x_i | x_{i+1}, ..., x_{i+t}) for the newly reachable (t, i)
    a[0, j] = xj
    for t in range(j):
        a[t + 1, j - t - 1] = E[t][j - t - 1].h_rev(a[t, j - t - 1], beta[t])


def inverse_rosenblatt(model, w):
    """Inverse of :func:`rosenblatt`: independent uniforms to a vine sample."""
    w = _as_array(w, model.d)
    s = model.structure
    E = model.edges
    n, d = w.shape
    out = np.empty((n, d))
    x = [None] * d
    try:
        if s.kind == "C":
            for j in range(d):
                v = w[:, j]
                for t in range(j - 1, -1, -1):
                    v = E[t][j - t - 1].h_inverse(v, w[:, t])
                x[j] = v
        else:
            a = {}
            for j in range(d):
                beta = [None] * (j + 1)
                beta[j] = w[:, j]
                for t in range(j - 1, -1, -1):
                    beta[t] = E[t][j - t - 1].h_inverse(beta[t + 1], a[t, j - t - 1])
                x[j] = beta[0]
                _advance_dvine(E, a, j, x[j], beta)
    except RootFindingError as exc:
        raise VineEvaluationError(f"inverse h-function failed: {exc}") from exc
    for j in range(d):
        out[:, s.order[j]] = x[j]
    return out


def simulate(model, n, rng):
    """``n`` draws from the vine copula by inverse conditional sampling."""
    if n == 0:
        return np.empty((0, model.d))
    return inverse_rosenblatt(model, rng.uniform(size=(n, model.d)))


# -- fitting -----------------------------------------------------------------


def _select_family(pairs, families, report, structure, t, k):
    label = structure.edge_label(t, k)
    best = None
    for fam in families:
        try:
            fit = fit_ml(fam, pairs)
        except (ValueError, ArithmeticError, RootFindingError) as exc:
            report.events.append(FitEvent(t, k, label, FamilyId(fam).value, f"fit error: {exc}"))
            continue
        if not np.isfinite(fit.aic):
            report.events.append(FitEvent(t, k, label, fit.copula.family.value, "non-finite AIC"))
            continue
        if not fit.converged:
            report.events.append(FitEvent(t, k, label, fit.copula.family.value, fit.message))
        if best is None or fit.aic < best.aic:
            best = fit
    if best is None:
        report.unstable = True
        report.events.append(FitEvent(t, k, label, "-", "all candidate families failed"))
        report.selected.append((t, k, label, None))
        return INDEPENDENCE
    if not best.converged:
        report.unstable = True
    report.selected.append((t, k, label, best))
    return best.copula


def fit_sequential_parametric(data, structure, families=CANDIDATE_FAMILIES, clip=TRANSFORM_CLIP):
    """Tree-by-tree minimum-AIC family selection.

    Each edge is fitted with every candidate family by maximum likelihood;
    the fitted h-functions of the selected copulas produce the data of the
    next tree.

    Returns
    -------
    model : VineModel
    report : FitReport
    """
    u = _as_array(data, structure.d)
    if u.shape[0] < 30:
        raise ValueError(f"sequential fit needs at least 30 observations, got {u.shape[0]}")
    report = FitReport()

    def get_edge(t, k, a, b):
        return _select_family(np.column_stack([a, b]), families, report, structure, t, k)

    try:
        _, edges = _tree_pass(structure, u, get_edge, clip=clip)
    except VineEvaluationError as exc:
        report.unstable = True
        t, k = exc.edge if exc.edge else (-1, -1)
        report.events.append(FitEvent(t, k, str(exc.edge), "-", str(exc)))
        return None, report
    return VineModel(structure, edges), report


def fit_sequential_bernstein(data, structure, m=None, clip=TRANSFORM_CLIP):
    """Tree-by-tree fit with a Bernstein copula on every edge.

    ``m`` defaults to the cube-root rule of :func:`bernstein.default_grid_size`.
    """
    u = _as_array(data, structure.d)
    n = u.shape[0]
    if m is None:
        m = bernstein.default_grid_size(n)
    if n < 5 * m:
        raise ValueError(f"need at least 5*m={5 * m} observations, got {n}")

    def get_edge(t, k, a, b):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return bernstein.fit(np.column_stack([a, b]), m)

    _, edges = _tree_pass(structure, u, get_edge, clip=clip)
    return VineModel(structure, edges)


# -- order selection ---------------------------------------------------------


def select_order(data, kind, tau=None):
    """Variable order from absolute empirical Kendall's tau.

    C-vine roots are chosen greedily: each next root maximizes the sum of
    |tau| to the variables not yet used as roots. The D-vine path maximizes
    the total |tau| of adjacent pairs, exactly (subset dynamic programming)
    for ``d <= 8`` and greedily otherwise.
    """
    if tau is None:
        tau = kendall_matrix(data if isinstance(data, PseudoSample) else PseudoSample(data))
    w = np.abs(np.asarray(tau, dtype=float))
    d = w.shape[0]
    np.fill_diagonal(w, 0.0)
    kind = str(kind).upper()
    if d == 2:
        return VineStructure(kind, (0, 1))
    if kind == "C":
        rest = list(range(d))
        order = []
        while rest:
            scores = [w[i, rest].sum() for i in rest]
            pick = rest[int(np.argmax(scores))]
            order.append(pick)
            rest.remove(pick)
        return VineStructure("C", order)
    path = _best_path(w) if d <= 8 else _greedy_path(w)
    if path[0] > path[-1]:
        path = path[::-1]
    return VineStructure("D", path)


def _best_path(w):
    d = w.shape[0]
    full = (1 << d) - 1
    best = np.full((1 << d, d), -np.inf)
    back = np.full((1 << d, d), -1, dtype=int)
    for i in range(d):
        best[1 << i, i] = 0.0
    for mask in range(1, full + 1):
        for last in range(d):
            val = best[mask, last]
            if val == -np.inf:
                continue
            for nxt in range(d):
                if mask & (1 << nxt):
                    continue
                cand = val + w[last, nxt]
                nm = mask | (1 << nxt)
                if cand > best[nm, nxt]:
                    best[nm, nxt] = cand
                    back[nm, nxt] = last
    last = int(np.argmax(best[full]))
    path, mask = [], full
    while last >= 0:
        path.append(last)
        prev = back[mask, last]
        mask &= ~(1 << last)
        last = prev
    return path[::-1]


def _greedy_path(w):
    d = w.shape[0]
    i, j = np.unravel_index(np.argmax(w), w.shape)
    path = [int(i), int(j)]
    rest = set(range(d)) - set(path)
    while rest:
        cands = [(w[path[0], r], 0, r) for r in rest] + [(w[path[-1], r], 1, r) for r in rest]
        _, end, r = max(cands)
        if end == 0:
            path.insert(0, r)
        else:
            path.append(r)
        rest.remove(r)
    return path


def path_weight(w, path):
    return float(sum(abs(w[a, b]) for a, b in zip(path[:-1], path[1:])))


# -- serialization -----------------------------------------------------------


def _fmt(x):
    return "%.17g" % x


def dumps(model):
    """Flat text form of a vine model; exact round trip through :func:`loads`."""
    s = model.structure
    lines = [f"{_HEADER} {FORMAT_VERSION}",
             f"structure {s.kind} {s.d} " + " ".join(str(i) for i in s.order)]
    for t, k in s.edge_index():
        c = model.edges[t][k]
        head = f"edge {t} {k}"
        if isinstance(c, BernsteinCopula):
            lines.append(f"{head} bernstein {c.m} " + " ".join(_fmt(x) for x in c.p.ravel()))
        else:
            parts = [head, "parametric", c.family.value, _fmt(c.theta)]
            if c.nu is not None:
                parts.append(_fmt(c.nu))
            lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def loads(text):
    """Parse the output of :func:`dumps`.

    Raises
    ------
    ValueError
        On any malformed or inconsistent content.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty model file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != _HEADER:
        raise ValueError("not a vine model file")
    if int(head[1]) != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {head[1]}")
    st = lines[1].split()
    if len(st) < 3 or st[0] != "structure":
        raise ValueError("missing structure line")
    d = int(st[2])
    structure = VineStructure(st[1], [int(x) for x in st[3:]])
    if structure.d != d:
        raise ValueError("structure dimension mismatch")
    edges = [[None] * (d - 1 - t) for t in range(d - 1)]
    for ln in lines[2:]:
        parts = ln.split()
        if parts[0] != "edge" or len(parts) < 5:
            raise ValueError(f"malformed edge line: {ln[:60]}")
        t, k = int(parts[1]), int(parts[2])
        if not (0 <= t < d - 1 and 0 <= k < d - 1 - t) or edges[t][k] is not None:
            raise ValueError(f"invalid or duplicate edge index ({t}, {k})")
        if parts[3] == "bernstein":
            m = int(parts[4])
            vals = np.array([float(x) for x in parts[5:]])
            if vals.size != m * m:
                raise ValueError(f"edge ({t}, {k}): expected {m * m} weights")
            edges[t][k] = BernsteinCopula(vals.reshape(m, m))
        elif parts[3] == "parametric":
            fam = FamilyId(parts[4])
            theta = float(parts[5]) if len(parts) > 5 else 0.0
            nu = float(parts[6]) if len(parts) > 6 else None
            edges[t][k] = ParametricPairCopula(fam, theta, nu)
        else:
            raise ValueError(f"unknown edge type {parts[3]!r}")
    if any(c is None for level in edges for c in level):
        raise ValueError("model file is missing edges")
    return VineModel(structure, edges)


def n_parameters(model):
    return sum(c.n_params for level in model.edges for c in level)
