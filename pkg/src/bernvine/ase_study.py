"""Simulation study: approximation error of Bernstein and parametric vines.

Random parametric vines are drawn, samples simulated from them, and both
estimators refitted; the average squared cdf error (ASE) over all edges
and an instability flag per replication are recorded.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .empirical import pseudo_observations
from .families import (CANDIDATE_FAMILIES, FamilyId, ParametricPairCopula, tau_to_parameter)
from .vine import (VineEvaluationError, VineModel, VineStructure, fit_sequential_bernstein,
                   fit_sequential_parametric, select_order, simulate)

TABLE_DIMS = (3, 5, 7, 9, 11, 13, 15)
ARMS = ("AIC", "Bernstein")
TAU_RANGE = (0.1, 0.7)
NU_RANGE = (3.0, 10.0)
ASE_LIMIT = 1.0
_SYMMETRIC = (FamilyId.GAUSSIAN, FamilyId.STUDENT_T)
_NEGATIVE = (FamilyId.CLAYTON_90, FamilyId.GUMBEL_90)


def random_pair_copula(rng, tau_range=TAU_RANGE, nu_range=NU_RANGE):
    """One edge: uniform family, ``|tau| ~ U(tau_range)``.

    The elliptical families get a random sign; the 90 degree rotations
    carry negative and all other families positive dependence.
    """
    fam = CANDIDATE_FAMILIES[rng.integers(len(CANDIDATE_FAMILIES))]
    tau = rng.uniform(*tau_range)
    if fam in _SYMMETRIC:
        tau *= rng.choice((-1.0, 1.0))
    elif fam in _NEGATIVE:
        tau = -tau
    nu = float(rng.uniform(*nu_range)) if fam is FamilyId.STUDENT_T else None
    return ParametricPairCopula(fam, tau_to_parameter(fam, tau), nu)


def random_true_vine(d, kind, rng, tau_range=TAU_RANGE, nu_range=NU_RANGE):
    """Random parametric vine on the natural order ``0..d-1``."""
    if d < 2:
        raise ValueError("d must be at least 2")
    structure = VineStructure(kind, tuple(range(d)))
    edges = [[random_pair_copula(rng, tau_range, nu_range) for _ in range(d - 1 - t)]
             for t in range(d - 1)]
    return VineModel(structure, edges)


def _edge_key(structure, t, k):
    a, b, cond = structure.edge_variables(t, k)
    return frozenset((a, b)), frozenset(cond), (a, b)


def ase(true_vine, fitted, grid=(20, 20)):
    """Average squared error between true and fitted edge cdfs.

    Edges are matched by their conditioned pair and conditioning set, so
    fitted vines on a different order are compared on the edges they
    share (``nan`` when none are shared). Points are ``(j/(m1+1), k/(m2+1))``.

    Returns
    -------
    float
        Mean over matched edges of the grid-averaged squared difference;
        ``inf`` or ``nan`` if a cdf evaluates non-finite.
    """
    m1, m2 = grid
    gu, gv = np.meshgrid(np.arange(1, m1 + 1) / (m1 + 1.0), np.arange(1, m2 + 1) / (m2 + 1.0),
                         indexing="ij")
    gu, gv = gu.ravel(), gv.ravel()
    fitted_edges = {}
    for t, k in fitted.structure.edge_index():
        pair, cond, ab = _edge_key(fitted.structure, t, k)
        fitted_edges[(pair, cond)] = (ab, fitted.edge(t, k))
    total, matched = 0.0, 0
    for t, k in true_vine.structure.edge_index():
        pair, cond, ab = _edge_key(true_vine.structure, t, k)
        if (pair, cond) not in fitted_edges:
            continue
        fab, cop = fitted_edges[(pair, cond)]
        c_true = true_vine.edge(t, k).cdf(gu, gv)
        c_fit = cop.cdf(gu, gv) if fab == ab else cop.cdf(gv, gu)
        total += float(np.mean((c_fit - c_true) ** 2))
        matched += 1
    if matched == 0:
        return float("nan")
    # Each edge's grid mean is already divided by m1*m2; average over edges.
    return total / matched


@dataclass(frozen=True)
class StudyConfig:
    """Grid of the simulation study.

    ``m`` is the Bernstein grid size (``None`` uses the cube-root rule);
    ``true_structure=False`` re-selects the vine order from the data.
    """

    dims: tuple = TABLE_DIMS
    kinds: tuple = ("C", "D")
    sample_sizes: tuple = (200, 500)
    replications: int = 1000
    m: int | None = None
    ase_grid: tuple = (20, 20)
    seed: int = 0
    true_structure: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if min(self.ase_grid) < 10:
            raise ValueError("ASE grid must be at least 10 x 10")
        if any(d < 2 for d in self.dims):
            raise ValueError("dimensions must be at least 2")
        for k in self.kinds:
            if str(k).upper() not in ("C", "D"):
                raise ValueError(f"unknown vine kind {k!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "kinds", tuple(str(k).upper() for k in self.kinds))
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "ase_grid", tuple(int(g) for g in self.ase_grid))


@dataclass(frozen=True)
class AseRecord:
    dim: int
    kind: str
    n: int
    arm: str
    replication: int
    ase: float
    unstable: bool
    reason: str = ""


def replication_rng(seed, dim, kind, n, rep):
    """Independent stream per replication, stable under any execution order."""
    return np.random.default_rng([int(seed), int(dim), "CD".index(kind), int(n), int(rep)])


def _stable_ase(true_vine, model, grid):
    with np.errstate(all="ignore"):
        val = ase(true_vine, model, grid)
    if not np.isfinite(val):
        return val, "non-finite ASE"
    if val > ASE_LIMIT:
        return val, f"ASE above {ASE_LIMIT}"
    return val, ""


def run_replication(cfg, dim, kind, n, rep):
    """Both arms on one simulated sample; returns two :class:`AseRecord`."""
    rng = replication_rng(cfg.seed, dim, kind, n, rep)
    truth = random_true_vine(dim, kind, rng)
    x = simulate(truth, n, rng)
    u = pseudo_observations(x)
    structure = truth.structure if cfg.true_structure else select_order(u, kind)
    out = []

    # parametric arm
    try:
        model, report = fit_sequential_parametric(u, structure)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        model, report = None, None
        reason = f"fit failed: {exc}"
    if model is None:
        if report is not None:
            reason = "; ".join(report.reasons) or "vine evaluation failed"
        out.append(AseRecord(dim, kind, n, "AIC", rep, float("nan"), True, reason))
    else:
        val, why = _stable_ase(truth, model, cfg.ase_grid)
        reasons = report.reasons if report.unstable else []
        if why:
            reasons.append(why)
        out.append(AseRecord(dim, kind, n, "AIC", rep, val, bool(reasons), "; ".join(reasons)))

    # Bernstein arm
    try:
        model = fit_sequential_bernstein(u, structure, cfg.m)
        val, why = _stable_ase(truth, model, cfg.ase_grid)
        out.append(AseRecord(dim, kind, n, "Bernstein", rep, val, bool(why), why))
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, VineEvaluationError) as exc:
        out.append(AseRecord(dim, kind, n, "Bernstein", rep, float("nan"), True,
                             f"{type(exc).__name__}: {exc}"))
    return out


def _run_cell(args):
    cfg, dim, kind, n, reps = args
    return [rec for rep in reps for rec in run_replication(cfg, dim, kind, n, rep)]


def study_cells(cfg):
    return [(d, k, n) for d in cfg.dims for k in cfg.kinds for n in cfg.sample_sizes]


def run_study(cfg, workers=1, progress=None):
    """Run every (dim, kind, n) cell of the study.

    Parameters
    ----------
    cfg : StudyConfig
    workers : int
        Worker processes; results do not depend on this number.
    progress : callable, optional
        Called as ``progress(dim, kind, n, n_done_cells, n_cells)``.

    Returns
    -------
    list of AseRecord
        Ordered by cell, replication and arm.
    """
    cells = study_cells(cfg)
    records = []
    if workers <= 1:
        for i, (d, k, n) in enumerate(cells):
            records.extend(_run_cell((cfg, d, k, n, range(cfg.replications))))
            if progress:
                progress(d, k, n, i + 1, len(cells))
        return records
    # split each cell's replications into chunks; reassemble in order
    chunks = max(1, workers)
    jobs = []
    for d, k, n in cells:
        for c in range(chunks):
            reps = range(c, cfg.replications, chunks)
            if len(reps):
                jobs.append((cfg, d, k, n, reps))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_run_cell, jobs))
    by_key = {}
    for job, recs in zip(jobs, results):
        for rec in recs:
            by_key[(rec.dim, rec.kind, rec.n, rec.replication, rec.arm)] = rec
    for i, (d, k, n) in enumerate(cells):
        for rep in range(cfg.replications):
            records.extend(by_key[(d, k, n, rep, arm)] for arm in ARMS)
        if progress:
            progress(d, k, n, i + 1, len(cells))
    return records


@dataclass
class SummaryRow:
    dim: int
    kind: str
    n: int
    arm: str
    ase_e3: float
    instability_pct: float
    replications: int
    stable: int
    extra: dict = field(default_factory=dict)


def summarize(records):
    """Mean ASE (x 1e-3) over stable replications and instability percentage."""
    groups = {}
    for r in records:
        groups.setdefault((r.dim, r.kind, r.n, r.arm), []).append(r)
    rows = []
    for (d, k, n, arm), recs in groups.items():
        stable = [r.ase for r in recs if not r.unstable]
        mean = float(np.mean(stable)) * 1e3 if stable else float("nan")
        rows.append(SummaryRow(d, k, n, arm, mean, 100.0 * (len(recs) - len(stable)) / len(recs),
                               len(recs), len(stable)))
    return rows


SUMMARY_COLUMNS = ("dim", "kind", "n", "arm", "ase_e3", "instability_pct", "replications", "stable")
RECORD_COLUMNS = ("dim", "kind", "n", "arm", "replication", "ase", "unstable", "reason")


def _fmt(v, human):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        if human:
            return "%.6f" % v
        return "%.17g" % v
    return str(v)


def format_summary(rows, seed, delimiter=",", human=True):
    lines = [f"# seed={seed}", delimiter.join(SUMMARY_COLUMNS)]
    for r in rows:
        d = asdict(r)
        lines.append(delimiter.join(_fmt(d[c], human) for c in SUMMARY_COLUMNS))
    return "\n".join(lines) + "\n"


def format_records(records, seed, delimiter=","):
    lines = [f"# seed={seed}", delimiter.join(RECORD_COLUMNS)]
    for r in records:
        d = asdict(r)
        d["reason"] = str(d["reason"]).replace(delimiter, ";").replace("\n", " ")
        lines.append(delimiter.join(_fmt(d[c], False) for c in RECORD_COLUMNS))
    return "\n".join(lines) + "\n"


def mean_ase(records, dim, arm, n=None, kind=None):
    """Mean raw ASE over stable records matching the filters."""
    vals = [r.ase for r in records if r.dim == dim and r.arm == arm and not r.unstable
            and (n is None or r.n == n) and (kind is None or r.kind == kind)]
    return float(np.mean(vals)) if vals else float("nan")


def instability_rate(records, dim, arm):
    recs = [r for r in records if r.dim == dim and r.arm == arm]
    return sum(r.unstable for r in recs) / len(recs) if recs else float("nan")
