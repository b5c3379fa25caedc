"""Ensembles, rate fits, noise floors, sweeps, and assumption checks.

Members of an ensemble share initial data and differ only in their
noise streams, derived from the master seed by spawn keys, so results
are reproducible bit-for-bit regardless of how many workers run them:
aggregation is by member index, never by completion order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fields import norm_raw, spec_of_id
from .integrate import BlowupError, _rng_for, simulate_pair
from .models import random_field
from .noise import apply_G_raw, increment_from_noise
from .observe import estimate_interp_constant, eta0


@dataclass(frozen=True)
class RunSetup:
    """Everything one coupled run needs besides its seed."""
    model: object
    cfg: object
    op: object
    coef: object
    q: object
    u0: object
    v0: object


@dataclass
class EnsembleResult:
    times: np.ndarray
    mean_w2_h: np.ndarray
    mean_w2_vstar: np.ndarray
    se_w2_h: np.ndarray
    se_w2_vstar: np.ndarray
    members: int
    member_w_h: np.ndarray     # (included members, steps+1)
    member_seeds: list
    blowups: int
    mean_hs: np.ndarray
    first: object              # SimResult of member 0, None if it blew up

    @property
    def partial(self):
        return self.blowups > 0


def member_seed(master_seed, member):
    return np.random.SeedSequence(master_seed, spawn_key=(member,))


def run_ensemble(setup, members, master_seed, workers=1, emit_y=False):
    """Monte Carlo over noise realizations; deterministic in master_seed.

    emit_y turns on observation-path bookkeeping for member 0 only; it
    draws nothing extra, so results match the emit_y=False run exactly.
    """
    if members < 1:
        raise ValueError("need at least one member")
    seeds = [member_seed(master_seed, m) for m in range(members)]

    def one(m):
        try:
            return simulate_pair(setup.model, setup.cfg, setup.op, setup.coef,
                                 setup.q, setup.u0, setup.v0, seeds[m],
                                 emit_y=emit_y and m == 0)
        except BlowupError as e:
            return e

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, range(members)))
    else:
        results = [one(m) for m in range(members)]

    ok = [r for r in results if not isinstance(r, BlowupError)]
    blowups = members - len(ok)
    if not ok:
        first_err = next(r for r in results if isinstance(r, BlowupError))
        raise BlowupError("every member's " + first_err.which, first_err.step,
                          first_err.t, first_err.accumulator)
    times = ok[0].times
    w2h = np.stack([r.w_h ** 2 for r in ok])
    w2v = np.stack([r.w_vstar ** 2 for r in ok])
    hs = np.stack([r.hs for r in ok])
    m_eff = len(ok)
    mean_h = w2h.mean(axis=0)
    mean_v = w2v.mean(axis=0)
    if m_eff > 1:
        se_h = w2h.std(axis=0, ddof=1) / np.sqrt(m_eff)
        se_v = w2v.std(axis=0, ddof=1) / np.sqrt(m_eff)
    else:
        se_h = np.zeros_like(mean_h)
        se_v = np.zeros_like(mean_v)
    first = results[0] if not isinstance(results[0], BlowupError) else None
    return EnsembleResult(times, mean_h, mean_v, se_h, se_v, members,
                          np.stack([r.w_h for r in ok]), seeds, blowups,
                          hs.mean(axis=0), first)


@dataclass
class RateFit:
    gamma_fit: float
    intercept: float
    window: tuple
    residual: float
    npoints: int
    note: str = ""


def fit_decay_rate(times, series, window=None):
    """Least-squares slope of log(series), gamma_fit = -slope.

    With no window given, fits [0.1, 0.9] * T_sync, where T_sync is the
    first time the series falls under max(10 * floor, 1e-12); shrinks
    past nonpositive values with a diagnostic rather than failing.
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    note = ""
    if window is None:
        tail = series[-max(len(series) // 4, 1):]
        thresh = max(10.0 * float(tail.mean()), 1e-12)
        below = np.flatnonzero(series < thresh)
        t_sync = times[below[0]] if below.size else times[-1]
        if t_sync <= 0.0:
            t_sync = times[-1]
        window = (0.1 * t_sync, 0.9 * t_sync)
    idx = (times >= window[0]) & (times <= window[1])
    if np.any(idx & (series <= 0.0)):
        bad = np.flatnonzero(idx & (series <= 0.0))
        idx = idx & (np.arange(len(series)) < bad[0])
        note = "window shrunk to positive values (noise floor reached)"
    idx = idx & (series > 0.0)
    n = int(idx.sum())
    if n < 3:
        raise ValueError("fewer than 3 positive samples in the fit window")
    t = times[idx]
    y = np.log(series[idx])
    slope, intercept = np.polyfit(t, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * t + intercept)) ** 2)))
    return RateFit(-float(slope), float(intercept),
                   (float(t[0]), float(t[-1])), resid, n, note)


def estimate_noise_floor(times, series, tail_frac=0.25):
    """Tail time-average of the mean-square error and its standard error."""
    series = np.asarray(series, dtype=float)
    n = len(series)
    k = max(int(round(n * tail_frac)), 1)
    if k < 10:
        raise ValueError("tail window has fewer than 10 samples")
    tail = series[-k:]
    return float(tail.mean()), float(tail.std(ddof=1) / np.sqrt(k))


def tail_sup(times, w_path, n_time):
    """sup of ||w_t|| over t >= N along one member path."""
    times = np.asarray(times, dtype=float)
    if n_time >= times[-1]:
        raise ValueError("N must lie inside the simulated horizon")
    sel = times >= n_time
    return float(np.max(np.asarray(w_path)[sel]))


@dataclass
class SweepResult:
    rows: list
    alpha_hat: float
    c_i_hat: float
    eta0_hat: float


def sweep(setup_factory, mu_grid, delta_grid, members, master_seed, workers=1):
    """Grid over (mu, delta): per cell gamma_fit, floor, blow-up counts,
    and the mu*delta^2 > eta0_hat flag from measured constants.

    setup_factory(mu, delta) -> RunSetup.  C_I is measured on the first
    cell's operator family per distinct delta; cells whose members blow
    up beyond 10% are marked invalid.
    """
    rows = []
    alpha_hat = None
    ci_by_delta = {}
    eta_by_delta = {}
    for delta in delta_grid:
        probe = setup_factory(mu_grid[0], delta)
        spec = probe.model if not isinstance(probe.model, str) else spec_of_id(probe.model)
        if alpha_hat is None:
            alpha_hat = measure_alpha(spec)
        ci_by_delta[delta] = estimate_interp_constant(probe.op, spec, samples=32)
        eta_by_delta[delta] = eta0(alpha_hat, ci_by_delta[delta])
    for mu in mu_grid:
        for delta in delta_grid:
            setup = setup_factory(mu, delta)
            row = {"mu": float(mu), "delta": float(delta),
                   "mu_delta_sq": float(mu) * float(delta) ** 2,
                   "eta0_hat": eta_by_delta[delta],
                   "over_threshold": float(mu) * float(delta) ** 2 > eta_by_delta[delta]}
            try:
                ens = run_ensemble(setup, members, master_seed, workers)
                row["blowups"] = ens.blowups
                row["members"] = members
                row["valid"] = ens.blowups <= 0.1 * members
                try:
                    fit = fit_decay_rate(ens.times, ens.mean_w2_h)
                    row["gamma_fit"] = fit.gamma_fit
                    row["fit_residual"] = fit.residual
                except ValueError as e:
                    row["gamma_fit"] = float("nan")
                    row["fit_residual"] = float("nan")
                    row["error"] = str(e)
                try:
                    floor, floor_se = estimate_noise_floor(ens.times, ens.mean_w2_h)
                    row["floor"] = floor
                    row["floor_se"] = floor_se
                except ValueError:
                    row["floor"] = float("nan")
                    row["floor_se"] = float("nan")
            except BlowupError as e:
                row["blowups"] = members
                row["members"] = members
                row["valid"] = False
                row["gamma_fit"] = float("nan")
                row["floor"] = float("nan")
                row["error"] = str(e)
            rows.append(row)
    first_delta = delta_grid[0]
    return SweepResult(rows, alpha_hat, ci_by_delta[first_delta],
                       eta_by_delta[first_delta])


def measure_alpha(spec):
    """Smallest Rayleigh quotient <A e_k, e_k> / ||e_k||_V^2 over modes."""
    mask = spec.mask
    quot = spec.a[mask] * spec.w_h[mask] ** 2 / spec.w_v[mask] ** 2
    return float(quot.min())


def _mm_envelope(times, kappa):
    """Smallest (M0, M1) with int_s^t kappa <= M0 (t-s) + M1 on a coarse
    grid of (s, t) pairs; ties broken toward the smallest M0."""
    times = np.asarray(times, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    if times.size < 2 or np.all(kappa == 0.0):
        return 0.0, 0.0, 0.0
    dt = np.diff(times)
    cum = np.concatenate([[0.0], np.cumsum(kappa[:-1] * dt)])
    total = float(cum[-1])
    stride = max(len(times) // 64, 1)
    idx = np.arange(0, len(times), stride)
    if idx[-1] != len(times) - 1:
        idx = np.append(idx, len(times) - 1)
    ts = times[idx]
    ks = cum[idx]
    ii, jj = np.triu_indices(len(idx), k=1)
    d_t = ts[jj] - ts[ii]
    d_k = ks[jj] - ks[ii]
    slopes = d_k / d_t
    cand = np.unique(np.concatenate([[0.0], slopes[slopes > 0.0]]))
    horizon = times[-1] - times[0]
    m1 = np.maximum(d_k[None, :] - cand[:, None] * d_t[None, :], 0.0).max(axis=1)
    cost = cand * horizon + m1
    best = cost.min()
    pick = int(np.flatnonzero(cost <= best * (1.0 + 1e-12) + 1e-300)[0])
    return float(cand[pick]), float(m1[pick]), total


_A2_EXPONENTS = {
    # (rho, beta) per model family
    "ac_weak": (2.0, 2.0 / 3.0),
    "ac_strong": (2.0, 0.6),
    "nse_weak": (1.0, 0.75),
    "nse_strong": (1.0, 0.75),
    "qg": (1.0, 0.75),
    "mhd": (1.0, 0.75),
}


def _vbeta_norm(spec, c, beta):
    w = spec.v_beta_weights(beta)
    if np.iscomplexobj(c):
        mag = c.real ** 2 + c.imag ** 2
    else:
        mag = c * c
    return float(np.sqrt(np.sum(spec.mult * w * w * mag)))


def _a2_ratio(spec, samples, seed):
    rho, beta = _A2_EXPONENTS[spec.params["family"]]
    best = 0.0
    for i in range(samples):
        u = random_field(spec, (seed, 3 * i), smoothness=1.0)
        v = random_field(spec, (seed, 3 * i + 1), smoothness=1.0)
        fu = spec.f_raw(u.coeffs)
        fv = spec.f_raw(v.coeffs)
        num = norm_raw(spec, fu - fv, "Vstar")
        nb_u = _vbeta_norm(spec, u.coeffs, beta)
        nb_v = _vbeta_norm(spec, v.coeffs, beta)
        den = (1.0 + nb_u ** rho + nb_v ** rho) * _vbeta_norm(
            spec, u.coeffs - v.coeffs, beta)
        if den > 0.0:
            best = max(best, num / den)
    return best


def _pairing_raw(spec, a, b):
    if np.iscomplexobj(a):
        prod = (a * np.conj(b)).real
    else:
        prod = a * b
    return float(np.sum(spec.mult * spec.w_h ** 2 * prod))


def _cancellation_residual(spec, samples, seed):
    worst = 0.0
    for i in range(samples):
        u = random_field(spec, (seed, i), smoothness=0.8)
        fu = spec.f_raw(u.coeffs)
        num = abs(_pairing_raw(spec, fu, u.coeffs))
        den = norm_raw(spec, fu, "Vstar") * norm_raw(spec, u.coeffs, "V")
        if den > 0.0:
            worst = max(worst, num / den)
    return worst


def _epsilon_hat(spec, traj_states, samples, seed):
    # <F(x), x> <= eps ||x||_V^2 + ||x||_H^2 + 0; measure the overshoot
    worst = 0.0
    states = list(traj_states)
    for i in range(samples):
        states.append(random_field(spec, (seed, 100 + i)).coeffs)
    for c in states:
        fu = spec.f_raw(c)
        lhs = _pairing_raw(spec, fu, c)
        over = lhs - norm_raw(spec, c, "H") ** 2
        v2 = norm_raw(spec, c, "V") ** 2
        if v2 > 0.0:
            worst = max(worst, over / v2)
    return max(worst, 0.0)


@dataclass
class AssumptionReport:
    model_id: str
    alpha_hat: float
    alpha_declared: float
    c_i_hat: float
    eta0_hat: float
    m0: float
    m1: float
    kappa_integral: float
    epsilon_hat: float
    epsilon_budget: float
    cancellation_residual: float
    a2_ratio: float
    a2_ratio_refined: float
    samples: dict = field(default_factory=dict)

    def lines(self):
        out = [
            "assumption report for %s" % self.model_id,
            "  coercivity: alpha_hat = %.12g (declared %.12g, mode minimum over %d modes)"
            % (self.alpha_hat, self.alpha_declared, self.samples.get("modes", 0)),
            "  observation: C_I_hat = %.6g (%d probe pairs), eta0_hat = 2*alpha/C_I^2 = %.6g"
            % (self.c_i_hat, self.samples.get("ci_samples", 0), self.eta0_hat),
            "  drift growth: int kappa = %.6g over the run; envelope M0 = %.6g, M1 = %.6g"
            " (constrained fit on %d grid pairs)"
            % (self.kappa_integral, self.m0, self.m1, self.samples.get("pairs", 0)),
            "  energy inequality: eps_hat = %.6g, budget alpha/4 = %.6g -> %s"
            % (self.epsilon_hat, self.epsilon_budget,
               "pass" if self.epsilon_hat < self.epsilon_budget else "FAIL"),
            "  local boundedness ratio (beta-interpolated): %.6g at base size,"
            " %.6g refined (factor %.3g)"
            % (self.a2_ratio, self.a2_ratio_refined,
               self.a2_ratio_refined / self.a2_ratio if self.a2_ratio else float("nan")),
        ]
        if not np.isnan(self.cancellation_residual):
            out.insert(4, "  cancellation: relative residual %.3g over %d random fields"
                       % (self.cancellation_residual, self.samples.get("cancel", 0)))
        return out


def verify_assumptions(model, traj, op, samples=24, seed=1234):
    """Estimate every structural constant on a simulated trajectory.

    traj is a SimResult (times and kappa series are read from it); op is
    the observation operator whose interpolation constant is measured.
    """
    spec = model if not isinstance(model, str) else spec_of_id(model)
    alpha_hat = measure_alpha(spec)
    ci = estimate_interp_constant(op, spec, samples=samples)
    m0, m1, total = _mm_envelope(traj.times, traj.kappa)
    cancel = float("nan")
    cancel_n = 0
    if spec.kind == "torus" and not spec.params.get("linear", False):
        cancel_n = samples
        cancel = _cancellation_residual(spec, samples, seed)
    traj_states = []
    if traj.u_path is not None:
        stride = max(len(traj.u_path) // 8, 1)
        traj_states = [traj.u_path[i] for i in range(0, len(traj.u_path), stride)]
    eps = _epsilon_hat(spec, traj_states, samples, seed)
    ratio = _a2_ratio(spec, samples, seed)
    refined = _a2_ratio(_refined_spec(spec, 2 * spec.n), samples, seed)
    stride = max(len(traj.times) // 64, 1)
    k = len(range(0, len(traj.times), stride))
    npairs = k * (k + 1) // 2
    return AssumptionReport(
        spec.model_id, alpha_hat, spec.alpha, ci, eta0(alpha_hat, ci),
        m0, m1, total, eps, alpha_hat / 4.0, cancel, ratio, refined,
        samples={"modes": int(spec.mask.sum()), "ci_samples": samples,
                 "pairs": npairs, "cancel": cancel_n, "a2": samples})


def _refined_spec(spec, n2):
    from .models import build_model
    return build_model(spec.params["family"], n2, nu=spec.nu,
                       norms=spec.params.get("norms", "homogeneous"),
                       linear=spec.params.get("linear", False))


def convolution_variance_mc(model, cfg, coef, q, probe_times, paths,
                            master_seed, chunk=500):
    """Per-mode sample variance of the stochastic convolution at probe
    times, over many paths.

    Member m draws its whole horizon in one call from the spawn_key=(m,)
    stream and steps through the same increment and resolvent operations
    as the single-path routine, so one path here is bit-identical to it.
    Works for 1D (sine) models; returns (probe_times, var, se) with var
    and se shaped (len(probe_times), n_modes).
    """
    spec = model if not isinstance(model, str) else spec_of_id(model)
    if spec.kind != "sine":
        raise ValueError("vectorized variance runs on 1D models")
    if coef.kind != "additive":
        raise ValueError("closed-form comparison needs additive noise")
    n = cfg.nsteps
    dt = cfg.dt
    steps = [int(round(t / dt)) for t in probe_times]
    if any(s < 1 or s > n for s in steps):
        raise ValueError("probe times must lie inside (0, T]")
    denom = 1.0 / (1.0 + dt * spec.a)
    zero_u = np.zeros(spec.shape, dtype=spec.dtype)
    probe_at = {s: i for i, s in enumerate(steps)}
    sum2 = np.zeros((len(steps), spec.n))
    sum4 = np.zeros((len(steps), spec.n))
    done = 0
    while done < paths:
        b = min(chunk, paths - done)
        blocks = np.empty((n, b, spec.n))
        for j in range(b):
            rng = _rng_for(member_seed(master_seed, done + j))
            blocks[:, j, :] = rng.standard_normal((n, spec.n))
        z = np.zeros((b, spec.n))
        for step in range(1, n + 1):
            dw = increment_from_noise(q, dt, blocks[step - 1])
            z = (z + cfg.mu * apply_G_raw(coef, spec, zero_u, dw)) * denom
            if step in probe_at:
                i = probe_at[step]
                sum2[i] += (z ** 2).sum(axis=0)
                sum4[i] += (z ** 4).sum(axis=0)
        done += b
    var = sum2 / paths
    # standard error of a sample variance via the fourth moment
    m4 = sum4 / paths
    se = np.sqrt(np.maximum(m4 - var ** 2, 0.0) / paths)
    return np.asarray(probe_times, dtype=float), var, se
