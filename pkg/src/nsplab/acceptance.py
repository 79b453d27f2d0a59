"""Executable acceptance criteria 1-9.

Each ``criterion_N`` returns a :class:`CriterionResult` whose ``checks`` map a
sub-check name to ``(measured, bound, passed)``.  The ``check`` CLI
subcommand and the acceptance tests both call these functions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import Grid1D, PhysParamsOne, PhysParamsTwo, d2dx2
from .rarewave import (BurgersWave, burgers_value, characteristic_foot, profile_onefluid, riemann_fan,
                       verify_decay_rates, wave_for)


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: dict = field(default_factory=dict)
    seconds: float = 0.0
    notes: str = ""

    @property
    def passed(self) -> bool:
        return all(ok for _, _, ok in self.checks.values())

    def add(self, name, measured, bound, ok):
        self.checks[name] = (float(measured), bound, bool(ok))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number} {status} {self.title} ({self.seconds:.1f} s)"

    def detail_lines(self):
        for name, (v, bound, ok) in self.checks.items():
            yield f"    [{'ok' if ok else 'FAIL'}] {name}: {v:.6g} (bound {bound})"

    def as_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "seconds": self.seconds, "notes": self.notes,
                "checks": {k: {"measured": v, "bound": str(b), "passed": ok}
                           for k, (v, b, ok) in self.checks.items()}}


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


ONE = PhysParamsOne(A=1.0, n_minus=1.0, n_plus=2.0, u_minus=0.0, eps_smooth=0.1)


@_timed
def criterion_1() -> CriterionResult:
    """Decay rates of the profile gradient in L^inf, L^2, L^1 over t in [100, 1000]."""
    r = CriterionResult(1, "profile derivative decay rates")
    wave = wave_for(ONE)
    times = np.geomspace(10.0, 1000.0, 41)
    bands = {np.inf: (-1.1, -0.9), 2.0: (-0.6, -0.4), 1.0: (-0.1, 0.05)}
    for p, (lo, hi) in bands.items():
        res = verify_decay_rates(wave, p, times, time_shift=1.0)
        r.add(f"slope p={p}", res["slope"], f"[{lo}, {hi}]", lo <= res["slope"] <= hi)
        if np.isinf(p):
            env = np.minimum(2.0 * ONE.delta_r * ONE.eps_smooth, 2.0 / times)
            worst = float(np.max(res["norms"] / env))
            r.add("max ||d_x u^r||_inf / min(2 delta_r eps, 2/t)", worst, "<= 1", worst <= 1.0)
    return r


@_timed
def criterion_2() -> CriterionResult:
    """Riemann invariant, quasineutral Euler residual and closeness to the centred fan."""
    r = CriterionResult(2, "profile exactness")
    p = ONE
    c = p.c
    worst_ri = 0.0
    worst_res = 0.0
    h = 1e-4
    for t in (0.0, 10.0, 100.0, 1000.0):
        grid = Grid1D.from_spacing(-200.0, (p.u_plus + c) * (t + 1) + 200.0, 0.1)
        pr = profile_onefluid(p, t, grid)
        inv = pr.ur - c * np.log(pr.nr)
        scale = np.maximum(1.0, np.abs(pr.ur) + c * np.abs(np.log(pr.nr)))
        worst_ri = max(worst_ri, float(np.max(np.abs(inv - (p.u_minus - c * math.log(p.n_minus))) / scale)))
        if t > 0:
            fwd = profile_onefluid(p, t + h, grid)
            bwd = profile_onefluid(p, t - h, grid)
            n_t = (fwd.nr - bwd.nr) / (2 * h)
            u_t = (fwd.ur - bwd.ur) / (2 * h)
            mass = n_t + pr.ur * pr.dnr + pr.nr * pr.dur
            mom = u_t + pr.ur * pr.dur + c * c * pr.dnr / pr.nr
            worst_res = max(worst_res, float(np.max(np.abs(mass))), float(np.max(np.abs(mom))))
    r.add("Riemann invariant relative deviation", worst_ri, "<= 1e-12", worst_ri <= 1e-12)
    r.add("quasineutral Euler residual", worst_res, "<= 1e-6", worst_res <= 1e-6)
    wave = BurgersWave(0.0, 1.0, 0.1)
    x = np.linspace(-300.0, 1300.0, 32001)
    gap = float(np.max(np.abs(burgers_value(wave, 1000.0, x) - riemann_fan(wave, 1000.0, x))))
    r.add("sup|w(1000) - w^R|, delta=1, eps=0.1", gap, "<= 0.02", gap <= 0.02)
    return r


@_timed
def criterion_3() -> CriterionResult:
    """Manufactured Poisson-Boltzmann solution, Newton order certificate, equilibrium fixed point."""
    from .poisson import solve_poisson_boltzmann

    r = CriterionResult(3, "elliptic solver")
    dx = 0.005
    x = np.linspace(-10.0, 10.0, int(round(20.0 / dx)) + 1)
    phi_star = np.tanh(x)
    n = d2dx2(phi_star, dx) + np.exp(-phi_star)
    rep = solve_poisson_boltzmann(n, dx, phi_star[0], phi_star[-1], initial_guess=np.zeros_like(x),
                                  check_positive=False)
    err = float(np.max(np.abs(rep.phi - phi_star)))
    r.add("manufactured tanh max error", err, "<= 1e-8", err <= 1e-8 and rep.converged)
    h = rep.residual_history
    ratio = h[-1] / (0.5 * h[-2] ** 2 / h[-3]) if len(h) >= 3 else math.inf
    r.add("Newton certificate r3 / (0.5 r2^2 / r1)", ratio, "<= 10", ratio <= 10.0)
    worst = 0.0
    for n0 in (0.5, 1.0, 2.0):
        nn = np.full(200, n0)
        e = solve_poisson_boltzmann(nn, 0.05, -math.log(n0), -math.log(n0))
        worst = max(worst, float(np.max(np.abs(e.phi + math.log(n0)))))
    r.add("constant equilibrium drift", worst, "<= 1e-13", worst <= 1e-13)
    return r


def _acceptance_frame_one():
    p = PhysParamsOne(A=1.0, n_minus=1.0, n_plus=2.0, u_minus=-math.sqrt(2.0), eps_smooth=0.1)
    return p, wave_for(p).w_plus


def _acceptance_frame_two(m_i=2.0, m_e=1.0):
    c = math.sqrt(2.0 / (m_i + m_e))
    p = PhysParamsTwo(m_i=m_i, m_e=m_e, T_i=1.0, T_e=1.0, n_minus=1.0, n_plus=2.0, u_minus=-c, eps_smooth=0.1)
    return p, wave_for(p).w_plus


def _value_at(times, values, t):
    k = int(np.argmin(np.abs(np.asarray(times) - t)))
    return float(values[k]), float(times[k])


def _halves(times, values):
    t = np.asarray(times)
    v = np.asarray(values)
    mid = 0.5 * (t[0] + t[-1])
    first = t <= mid
    second = t >= mid
    return np.trapezoid(v[first], t[first]), np.trapezoid(v[second], t[second])


@_timed
def criterion_4(dx: float = 0.05, t_final: float = 200.0) -> CriterionResult:
    """One-fluid stability run: A=1, n-=1, n+=2, eps=0.1, Gaussian density bump 0.05."""
    from .diagnostics import envelope_nonincreasing
    from .sim import Perturbation, SimConfig, run_simulation

    r = CriterionResult(4, "one-fluid stability at desk scale")
    p, wplus = _acceptance_frame_one()
    grid = Grid1D.from_spacing(-60.0, 60.0 + wplus * t_final, dx)
    cfg = SimConfig("one_fluid", p, grid, t_final, perturbation=Perturbation(amplitude=0.05),
                    output_stride=max(1, int(round(0.25 / (0.4 * dx / (2 * p.c))))),
                    sponge_width=20.0, sponge_strength=2.0)
    traj = run_simulation(cfg)
    ts = traj.times
    reps = [s.report for s in traj.snapshots]
    t_early = 0.1 * t_final
    sup_n = [q.sup_n for q in reps]
    gap = [q.quasineutral_gap for q in reps]
    n20, _ = _value_at(ts, sup_n, t_early)
    g20, _ = _value_at(ts, gap, t_early)
    ra = sup_n[-1] / n20
    rb = gap[-1] / g20
    r.add("(a) sup|n-n^r|(T) / sup|n-n^r|(T/10)", ra, "<= 0.5", ra <= 0.5)
    r.add("(b) sup|phi+ln n|(T) / sup|phi+ln n|(T/10)", rb, "<= 0.5", rb <= 0.5)
    env = envelope_nonincreasing(ts, [q.lyapunov for q in reps], 5.0, n_blocks=10, slack=0.05)
    r.add("(c) Lyapunov block-max ratio (operationalised monotone envelope)", env["worst_ratio"], "<= 1.05",
          env["passes"])
    first, second = _halves(ts, [q.D_flat for q in reps])
    r.add("(d) flat dissipation integral, second half / first half", second / first, "< 1", second < first)
    r.add("mass balance error", traj.mass_balance_error, "<= 1e-10", traj.mass_balance_error <= 1e-10)
    r.notes = ("frame u_-=-c so the fan fits [-60, 60+w_+ T]; absorbing layers of width 20 at both ends; "
               "(c) is an operationalisation of a non-increasing envelope")
    return r


@_timed
def criterion_5(dx: float = 0.05, t_final: float = 200.0, symmetry_steps: int = 10_000) -> CriterionResult:
    """Two-fluid stability run (m_i=2, m_e=1, T_i=T_e=1) and species-symmetry preservation."""
    from .sim import Perturbation, SimConfig, run_simulation

    r = CriterionResult(5, "two-fluid stability at desk scale")
    p, wplus = _acceptance_frame_two()
    grid = Grid1D.from_spacing(-60.0, 60.0 + wplus * t_final, dx)
    cfg = SimConfig("two_fluid", p, grid, t_final, perturbation=Perturbation(amplitude=0.05),
                    output_stride=max(1, int(round(0.25 / (0.4 * dx / (2 * p.sound_speed()))))),
                    sponge_width=20.0, sponge_strength=2.0)
    traj = run_simulation(cfg)
    ts = traj.times
    reps = [s.report for s in traj.snapshots]
    late = ts >= 5.0
    gap = np.array([q.species_gap for q in reps])
    dphi = np.array([q.sup_phi for q in reps])
    ra = gap[-1] / gap[late].max()
    rb = dphi[-1] / dphi[late].max()
    r.add("(a) sup|u_i-u_e|(T) / post-transient peak", ra, "<= 0.5", ra <= 0.5)
    r.add("(b) sup|d_x(phi-phi^r)|(T) / post-transient peak", rb, "<= 0.5", rb <= 0.5)
    qmin = min(q.quad_form for q in reps)
    r.add("(c) min quad_form over outputs", qmin, ">= 0", qmin >= 0.0)

    ps, ws = _acceptance_frame_two(1.0, 1.0)
    sym_T = 200.0
    sgrid = Grid1D.from_spacing(-60.0, 60.0 + ws * sym_T, 0.25)
    scfg = SimConfig("two_fluid", ps, sgrid, sym_T, perturbation=Perturbation(amplitude=0.05),
                     dt=sym_T / symmetry_steps, output_stride=symmetry_steps)
    st = run_simulation(scfg, diagnostics=False).final_state
    asym = max(float(np.max(np.abs(st.n_i - st.n_e))), float(np.max(np.abs(st.u_i - st.u_e))))
    r.add(f"(d) species asymmetry after {symmetry_steps} steps", asym, "<= 1e-12", asym <= 1e-12)
    r.notes = "frame u_-=-c; absorbing layers of width 20; post-transient means t >= 5"
    return r


@_timed
def criterion_6() -> CriterionResult:
    """Appendix algebra: Vieta, projections, semigroup, energy identity, decay rates, eps -> 0."""
    import scipy.linalg

    from .linear import decay_rate, eigensystem, greens_matrix, mode_coefficients, mode_energy

    r = CriterionResult(6, "linear appendix")
    xis = np.linspace(-100.0, 100.0, 2001)
    vieta = proj = sumI = 0.0
    for literal in (False, True):
        for xi in xis:
            m = eigensystem(mode_coefficients(xi, 1.0, 1.0, literal))
            x2 = xi * xi
            vieta = max(vieta, abs(m.lambda_plus + m.lambda_minus + x2) / max(1.0, x2),
                        abs(m.lambda_plus * m.lambda_minus - x2 * m.sigma) / max(1.0, x2 * m.sigma))
            if m.degenerate or abs(m.lambda_plus - m.lambda_minus) < 1e-4 * max(1.0, x2):
                continue
            P, Q = m.P_plus, m.P_minus
            sumI = max(sumI, np.max(np.abs(P + Q - np.eye(2))))
            proj = max(proj, np.max(np.abs(P @ P - P)), np.max(np.abs(Q @ Q - Q)), np.max(np.abs(P @ Q)))
    r.add("Vieta relative error", vieta, "<= 1e-12", vieta <= 1e-12)
    r.add("|P+ + P- - I|", sumI, "<= 1e-12", sumI <= 1e-12)
    r.add("projection algebra", proj, "<= 1e-10", proj <= 1e-10)

    g0 = max(np.max(np.abs(greens_matrix(eigensystem(mode_coefficients(xi, 1.0, 1.0)), 0.0) - np.eye(2)))
             for xi in xis[::50])
    r.add("|G(0) - I|", g0, "== 0", g0 == 0.0)

    rng = np.random.default_rng(6)
    semi = 0.0
    for _ in range(200):
        xi = rng.uniform(-20.0, 20.0)
        m = eigensystem(mode_coefficients(xi, 1.0, 1.0, bool(rng.integers(2))))
        t, s = rng.uniform(0.0, 5.0, 2)
        semi = max(semi, np.max(np.abs(greens_matrix(m, t + s) - greens_matrix(m, t) @ greens_matrix(m, s))))
    r.add("semigroup defect", semi, "<= 1e-10", semi <= 1e-10)

    ident = 0.0
    for xi in (0.1, 0.5, 1.0, 2.0, 5.0, 10.0):
        m = eigensystem(mode_coefficients(xi, 1.0, 1.0))
        h = 1e-5 / max(1.0, xi * xi)
        s0 = np.array([1.0 + 0.3j, -0.2 + 0.5j])

        def E0(t):
            s = greens_matrix(m, t) @ s0
            return mode_energy(s[0], s[1], m, 0.0)["E"], abs(s[1]) ** 2

        for t in (0.5, 1.0, 3.0):
            dE = (E0(t + h)[0] - E0(t - h)[0]) / (2 * h)
            e, u2 = E0(t)
            ident = max(ident, abs(dE + 2 * xi * xi * u2) / (xi * xi * e))
    r.add("energy identity defect (relative to xi^2 E)", ident, "<= 1e-8", ident <= 1e-8)

    rates = []
    for xi in (0.1, 1.0, 10.0):
        lam = decay_rate(eigensystem(mode_coefficients(xi, 1.0, 1.0)), kappa=0.05)
        rates.append(lam / (xi * xi / (1 + xi * xi)))
        r.add(f"decay rate xi={xi}", lam, "> 0", lam > 0)
    spread = max(rates) / min(rates)
    r.add("decay-rate spread after dividing by xi^2/(1+xi^2)", spread, "<= 3", spread <= 3.0)

    lim = 0.0
    for literal in (False, True):
        m = eigensystem(mode_coefficients(1.0, 1e-6, 1.0, literal))
        sigma0 = 1.0 if literal else 2.0
        M0 = np.array([[0, -1j], [-1j * sigma0, -1.0]])
        G0 = scipy.linalg.expm(M0)
        lim = max(lim, float(np.max(np.abs(greens_matrix(m, 1.0) - G0) / np.abs(G0))))
    r.add("eps=1e-6 vs eps->0 propagator (relative)", lim, "<= 1e-4", lim <= 1e-4)
    return r


@_timed
def criterion_7() -> CriterionResult:
    """Small-amplitude nonlinear periodic run against the exact mode propagators."""
    from .linear import linearized_consistency

    r = CriterionResult(7, "linear cross-validation")
    e4 = linearized_consistency([1], amplitude=1e-4, n_cells=256, t_final=10.0)["max"]
    e3 = linearized_consistency([1], amplitude=1e-3, n_cells=256, t_final=10.0)["max"]
    r.add("relative error at amplitude 1e-4", e4, "<= 1e-3", e4 <= 1e-3)
    r.add("error ratio amplitude 1e-3 / 1e-4", e3 / e4, "[8, 12]", 8.0 <= e3 / e4 <= 12.0)
    return r


def scheme_order_errors(dxs=(0.2, 0.1), dx_ref: float = 0.025, t_final: float = 2.0):
    """Sup deviation of ``[n, u]`` from a fine reference run at the coarse nodes."""
    from .sim import Perturbation, SimConfig, run_simulation

    p = PhysParamsOne(A=1.0, n_minus=1.0, n_plus=2.0, u_minus=-math.sqrt(2.0), eps_smooth=0.5)
    L = 30.0

    def run(dx):
        grid = Grid1D(-L, L, int(round(2 * L / dx)) + 1)
        cfg = SimConfig("one_fluid", p, grid, t_final, perturbation=Perturbation(amplitude=0.05),
                        output_stride=10**9)
        return grid, run_simulation(cfg, diagnostics=False).final_state

    gref, ref = run(dx_ref)
    errs = []
    for dx in dxs:
        g, st = run(dx)
        stride = int(round(dx / dx_ref))
        errs.append(max(float(np.max(np.abs(st.n - ref.n[::stride]))),
                        float(np.max(np.abs(st.u - ref.u[::stride])))))
    return errs


@_timed
def criterion_8() -> CriterionResult:
    """Second-order convergence of the one-fluid scheme under dx -> dx/2 with CFL-scaled dt."""
    r = CriterionResult(8, "scheme order")
    e1, e2 = scheme_order_errors()
    r.add("error ratio dx=0.2 / dx=0.1", e1 / e2, ">= 3", e1 / e2 >= 3.0)
    r.add("observed order", math.log2(e1 / e2), ">= 1.6", math.log2(e1 / e2) >= 1.6)
    return r


@_timed
def criterion_9() -> CriterionResult:
    """Closed forms against independent numerical oracles."""
    import scipy.integrate

    from .diagnostics import psi_potential

    r = CriterionResult(9, "oracle equivalence")
    vals = np.geomspace(0.1, 10.0, 20)
    worst = 0.0
    for n in vals:
        for nr in vals:
            exact = psi_potential(n, nr, 1.0)
            q, _ = scipy.integrate.quad(lambda s: (s - nr) / s**2, nr, n, epsabs=0.0, epsrel=1e-13, limit=200)
            worst = max(worst, abs(exact - q) / max(abs(q), 1e-300) if q != 0 else abs(exact))
    r.add("psi closed form vs quadrature (relative)", worst, "<= 1e-10", worst <= 1e-10)

    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        wm = rng.uniform(-2.0, 2.0)
        wave = BurgersWave(wm, wm + rng.uniform(0.1, 3.0), 10 ** rng.uniform(-2, 0))
        t = 10 ** rng.uniform(-1, 3)
        x = rng.uniform(wave.w_minus * t - 50, wave.w_plus * t + 50)
        lo, hi = x - t * wave.w_plus, x - t * wave.w_minus
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid + t * float(wave.initial(mid)) - x > 0:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-15 * (1 + abs(mid)):
                break
        worst = max(worst, abs(float(characteristic_foot(wave, t, x)) - 0.5 * (lo + hi)) / (1 + abs(x)))
    r.add("characteristic foot vs bisection (relative)", worst, "<= 1e-10", worst <= 1e-10)
    return r


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


def run_criteria(numbers=None, echo: bool = False) -> list[CriterionResult]:
    out = []
    for k in numbers or sorted(CRITERIA):
        res = CRITERIA[k]()
        if echo:
            print(res.line(), flush=True)
            for line in res.detail_lines():
                print(line, flush=True)
        out.append(res)
    return out
