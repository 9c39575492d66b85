"""Seeded synthetic price panels: t-GARCH margins joined by a known vine.

The bundled files in ``bernvine/data`` were produced by
:func:`write_fixtures` and can be regenerated bit-exactly.
"""

import datetime as dt
from importlib import resources

import numpy as np

from .families import FamilyId, ParametricPairCopula, tau_to_parameter
from .garch import garch_path, t_quantile
from .vine import VineModel, VineStructure, simulate

FIXTURE_SEED = 20240601
PANEL_FILE = "synthetic_5asset_prices.csv"
SMALL_FILE = "synthetic_3asset_returns.csv"

# (alpha0, alpha1, beta, nu) per asset, daily log-return scale
_MARGINS = (
    (2.0e-6, 0.06, 0.92, 7.0),
    (3.0e-6, 0.08, 0.90, 5.0),
    (1.5e-6, 0.05, 0.93, 8.0),
    (4.0e-6, 0.09, 0.88, 6.0),
    (2.5e-6, 0.07, 0.91, 9.0),
)


def _pc(family, tau, nu=None):
    return ParametricPairCopula(family, tau_to_parameter(family, tau), nu)


def fixture_vine(d=5):
    """The known C-vine behind the synthetic panel (``d <= 5``)."""
    tree = [
        [_pc(FamilyId.STUDENT_T, 0.45, 6.0), _pc(FamilyId.GUMBEL, 0.40),
         _pc(FamilyId.GAUSSIAN, 0.35), _pc(FamilyId.CLAYTON, 0.30)],
        [_pc(FamilyId.GAUSSIAN, 0.20), _pc(FamilyId.SURVIVAL_CLAYTON, 0.15),
         _pc(FamilyId.GUMBEL, 0.20)],
        [_pc(FamilyId.CLAYTON_90, -0.10), _pc(FamilyId.GAUSSIAN, 0.10)],
        [_pc(FamilyId.STUDENT_T, 0.05, 8.0)],
    ]
    edges = [level[: d - 1 - t] for t, level in enumerate(tree[: d - 1])]
    return VineModel(VineStructure("C", tuple(range(d))), edges)


def simulate_returns(T, d=5, seed=FIXTURE_SEED, burn=500):
    """``T`` days of log returns from vine-coupled GARCH(1,1)-t margins."""
    rng = np.random.default_rng(seed)
    u = simulate(fixture_vine(d), T + burn, rng)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    r = np.empty((T + burn, d))
    for j in range(d):
        a0, a1, b, nu = _MARGINS[j]
        z = t_quantile(nu, u[:, j])
        r[:, j] = garch_path(2e-4, a0, a1, b, z)
    return r[burn:]


def _business_days(start, n):
    out, day = [], start
    while len(out) < n:
        if day.weekday() < 5:
            out.append(day.isoformat())
        day += dt.timedelta(days=1)
    return out


def synthetic_prices(T=801, d=5, seed=FIXTURE_SEED, p0=100.0):
    """Dates, asset names and a (T, d) price matrix starting at ``p0``."""
    r = simulate_returns(T - 1, d, seed)
    cum = np.vstack([np.zeros((1, d)), np.cumsum(r, axis=0)])
    dates = _business_days(dt.date(2015, 1, 2), T)
    return dates, [f"A{j + 1}" for j in range(d)], p0 * np.exp(cum)


def write_fixtures(directory):
    """Regenerate the bundled fixture files into ``directory``."""
    from pathlib import Path

    from .risk import write_panel

    directory = Path(directory)
    dates, names, prices = synthetic_prices()
    note = [f"seed={FIXTURE_SEED}", "synthetic GARCH(1,1)-t margins coupled by a known C-vine"]
    write_panel(directory / PANEL_FILE, dates, names, prices, header_lines=note)
    r = simulate_returns(400, 3, FIXTURE_SEED + 1)
    write_panel(directory / SMALL_FILE, _business_days(dt.date(2018, 1, 2), 400),
                names[:3], r, header_lines=[f"seed={FIXTURE_SEED + 1}", "synthetic log returns"])


def fixture_path(name=PANEL_FILE):
    """Filesystem path of a bundled fixture file."""
    return str(resources.files("bernvine").joinpath("data", name))
