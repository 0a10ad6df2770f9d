"""Comparison-principle checks and the pole-amplification experiment.

The maximum principle used throughout: if u >= v on the boundary of a
subinterval and the Monge-Ampere density of u is at most that of v inside
it, then u >= v on the whole subinterval. ``bt_compare`` verifies the
hypotheses before evaluating the conclusion and reports which hypothesis
failed when they do not hold.

``bootstrap_lelong_bound`` renders the self-improvement step of the
amplification argument: wherever the solved perturbation is bounded above
by A on a pole neighbourhood, the density inequality pushes the pole
coefficient up to e^{-tau*A/n} * gamma. The bound is only valid on windows
containing the mollified mass; on smaller windows it overshoots, which is
the finite-mollification shadow of the blow-up contradiction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import KahlerModel
from .grid import RadialPotential
from .rhs import build_dirac_rhs, check_lower_bound
from .solver import (
    EquationKind,
    SolveConfig,
    continuity_in_t,
    diagnostics_for,
    neutral_oracle,
    newton_solve,
    pole_slope_sample,
)

HOLDS_TOL = 1e-9


@dataclass(frozen=True)
class ComparisonReport:
    holds: bool
    hypotheses_ok: bool
    failed_hypothesis: str | None
    first_violation_node: int | None
    margin: float

    def __post_init__(self):
        if self.holds and not self.hypotheses_ok:
            raise ConfigurationError("conclusion cannot be claimed without hypotheses")


def bt_compare(u: RadialPotential, v: RadialPotential, a: float, b: float,
               tol: float = HOLDS_TOL) -> ComparisonReport:
    """Maximum-principle comparison of two potentials on [a, b].

    Hypotheses: u >= v at both endpoints and density(u) <= density(v) on the
    open subinterval. When they hold, returns the conclusion margin
    min(u - v); ``holds`` is margin >= -tol. When they fail, names the
    failed hypothesis and claims nothing.
    """
    u.grid.require_same(v.grid)
    grid = u.grid
    if a < grid.s_min - 1e-12 or b > grid.s_max + 1e-12 or a >= b:
        raise ConfigurationError(f"subinterval [{a}, {b}] is not inside the grid")
    ia, ib = grid.index_of(a), grid.index_of(b)
    if ib - ia < 2:
        raise ConfigurationError("subinterval must contain interior nodes")

    du = u.values - v.values
    if du[ia] < -tol or du[ib] < -tol:
        node = ia if du[ia] < -tol else ib
        return ComparisonReport(False, False, "boundary domination",
                                int(node), float(min(du[ia], du[ib])))
    # compare the reduced densities (u')^{n-1} u'': the coordinate-volume
    # factor e^{-ns} is common and positive, so the measure inequality is
    # unchanged, and dropping it keeps the check at the rounding floor of
    # the stencils instead of exponentially amplifying it at the pole side
    n = u.n
    red_u = u.d1 ** (n - 1) * u.d2
    red_v = v.d1 ** (n - 1) * v.d2
    dens_gap = red_v[ia + 1:ib] - red_u[ia + 1:ib]
    bad = np.nonzero(dens_gap < -tol)[0]
    if bad.size:
        return ComparisonReport(False, False, "density domination",
                                int(bad[0]) + ia + 1, float(dens_gap.min()))
    margin = float(du[ia:ib + 1].min())
    node = int(np.argmin(du[ia:ib + 1])) + ia
    return ComparisonReport(margin >= -tol, True, None,
                            None if margin >= -tol else node, margin)


def bootstrap_lelong_bound(phi, tau0: float, gamma: float, window: float,
                           model: KahlerModel) -> float:
    """Implied pole-coefficient lower bound e^{-tau0 * A_W / n} * gamma.

    A_W is the sup of the perturbation over [s_min, s_min + window]. The
    bound is at least gamma whenever the perturbation is nonpositive there,
    and shrinking the window can only increase it.
    """
    if gamma <= 0:
        raise ConfigurationError("bootstrap needs a positive pole coefficient")
    if not (0.0 < tau0 < 1.0):
        raise ConfigurationError(f"tau0 must lie in (0, 1), got {tau0}")
    vals = phi.values if isinstance(phi, RadialPotential) else np.asarray(phi, dtype=float)
    grid = model.grid
    if window <= 0 or grid.s_min + window > grid.s_max:
        raise ConfigurationError("window does not fit the grid")
    j = grid.index_of(grid.s_min + window)
    a_w = float(np.max(vals[:j + 1]))
    return math.exp(-tau0 * a_w / model.n) * gamma


@dataclass(frozen=True)
class MagnificationRow:
    eps: float
    nu_measured: float
    nu_neutral: float
    nu_bootstrap: float
    avg_phi: float
    lelong_secant: float
    converged: bool
    diagnostics: object = None
    iterations: int = 0


@dataclass(frozen=True)
class MagnificationReport:
    rows: tuple[MagnificationRow, ...]
    verdict: str
    eta: float
    eta_warning: str | None

    def amplification_table(self) -> list[dict]:
        return [row.__dict__ for row in self.rows]


def magnification_experiment(model: KahlerModel, gamma: float, tau0: float,
                             eps_list, config: SolveConfig | None = None,
                             ) -> MagnificationReport:
    """Per-mollifier comparison of the amplifying solve against neutrality.

    For each eps: solve the amplifying equation at tau0 (continuity from 0,
    warm-started across the eps list), measure the pole slope, compare with
    the neutral control at the same eps, and with the bootstrap bound taken
    over the pole window [s_min, layer]. The verdict is one of
    reached_target / barrier / average_blowup, the last when the volume
    averages grow monotonically by at least one unit per mollifier step.

    The curvature margin eta of the family is evaluated first; tau0 >= eta
    does not stop the run (the point-mass families genuinely fail the bound,
    which is what the probe is for) but is recorded as a warning.
    """
    if gamma < 0:
        raise ConfigurationError("gamma must be nonnegative")
    eps_arr = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_arr, eps_arr[1:])):
        raise ConfigurationError("eps list must be strictly decreasing")
    cfg = config or SolveConfig()

    eta_warning = None
    if gamma == 0.0:
        eta = float(model.n + 1)
    else:
        eta = check_lower_bound(build_dirac_rhs(gamma, eps_arr[0], model)).eta
        if tau0 >= eta:
            eta_warning = (
                f"tau0 = {tau0} is not below the curvature margin eta = {eta:.3g}; "
                "proceeding as an experimental probe")
            warnings.warn(eta_warning, stacklevel=2)

    rows: list[MagnificationRow] = []
    prev_phi = None
    failed = False
    for eps in eps_arr:
        rhs = build_dirac_rhs(gamma, eps, model)
        control = neutral_oracle(model, rhs)
        nu_neutral = pole_slope_sample(control.values - model.psi.values, model, rhs)
        if gamma == 0.0:
            res = newton_solve(model, rhs, EquationKind("magnifying", tau0), cfg)
        elif prev_phi is not None:
            from dataclasses import replace
            from .solver import _mass_balanced_shift
            guess = _mass_balanced_shift(prev_phi, rhs, EquationKind("magnifying", tau0))
            res = newton_solve(model, rhs, EquationKind("magnifying", tau0),
                               replace(cfg, initial_guess=guess))
            if not res.converged:
                _, res = continuity_in_t(model, rhs, EquationKind("magnifying", tau0), tau0, cfg)
        else:
            _, res = continuity_in_t(model, rhs, EquationKind("magnifying", tau0), tau0, cfg)
        if res is None or not res.converged:
            failed = True
            rows.append(MagnificationRow(eps, math.nan, nu_neutral, math.nan,
                                         math.nan, math.nan, False,
                                         diagnostics=None if res is None else res.diagnostics,
                                         iterations=0 if res is None else res.iterations))
            continue
        prev_phi = res.phi
        layer_window = max(rhs.pole_anchor - model.grid.s_min, 4.0 * model.grid.h) \
            if rhs.pole_anchor is not None else 4.0 * model.grid.h
        layer_window = min(layer_window, model.grid.s_max - model.grid.s_min - model.grid.h)
        bound = bootstrap_lelong_bound(res.phi, tau0, gamma, layer_window, model) \
            if gamma > 0 else 0.0
        diag = diagnostics_for(res.phi, model, rhs)
        rows.append(MagnificationRow(
            eps=eps,
            nu_measured=pole_slope_sample(res.phi, model, rhs),
            nu_neutral=nu_neutral,
            nu_bootstrap=bound,
            avg_phi=diag.avg_phi,
            lelong_secant=diag.lelong.value,
            converged=True,
            diagnostics=diag,
            iterations=res.iterations,
        ))

    avgs = [r.avg_phi for r in rows if r.converged]
    if failed:
        verdict = "barrier"
    elif (len(avgs) >= 2 and all(b > a for a, b in zip(avgs, avgs[1:]))
          and avgs[-1] - avgs[0] >= 1.0 * (len(avgs) - 1)):
        verdict = "average_blowup"
    else:
        verdict = "reached_target"
    return MagnificationReport(tuple(rows), verdict, eta, eta_warning)
