"""Damped least-squares fitting of relaxation and polarisation data.

The engine is a Levenberg-Marquardt iteration with Marquardt diagonal
scaling, forward-difference Jacobians and box bounds enforced by clipping.
A trial step is accepted only if it lowers the cost, so the accepted cost
sequence is monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .relaxation import T1Model, t1_rate
from .results import ResultTable

MAX_ITER = 500
XTOL = 1e-10
FTOL = 1e-12
FD_STEP = math.sqrt(np.finfo(float).eps)
LAMBDA_INIT = 1e-3
LAMBDA_MAX = 1e16


@dataclass
class FitResult:
    params: dict[str, float]
    uncertainties: dict[str, float] = field(default_factory=dict)
    residual_norm: float = math.nan
    converged: bool = False
    iterations: int = 0
    message: str = ""
    flags: tuple[str, ...] = ()
    cost_history: list[float] = field(default_factory=list, repr=False)

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def sigma(self, name: str) -> float:
        return self.uncertainties.get(name, math.nan)

    def to_table(self) -> ResultTable:
        names = list(self.params)
        return ResultTable(
            {
                "parameter": np.array(names, dtype=object),
                "value": np.array([self.params[n] for n in names]),
                "sigma": np.array([self.uncertainties.get(n, math.nan) for n in names]),
                "quality": np.array(["ok" if self.converged else "not_converged"] * len(names), dtype=object),
            }
        )

    def report(self) -> str:
        lines = [f"converged: {self.converged} ({self.message}) after {self.iterations} iterations",
                 f"residual norm: {self.residual_norm:.6g}"]
        if self.flags:
            lines.append("flags: " + ", ".join(self.flags))
        for name, value in self.params.items():
            s = self.uncertainties.get(name)
            lines.append(f"  {name} = {value:.6g}" + ("" if s is None else f" +/- {s:.2g}"))
        return "\n".join(lines)


@dataclass
class DataSet:
    """Observed values with their independent variables (columns by name)."""

    columns: dict[str, np.ndarray]
    provenance: str = ""

    def __post_init__(self):
        self.columns = {k: np.asarray(v, float) for k, v in self.columns.items()}
        if "value" not in self.columns:
            raise ValueError("data set needs a 'value' column")
        if "sigma" in self.columns and np.any(self.columns["sigma"] <= 0):
            raise ValueError("sigmas must be positive")

    def __len__(self):
        return self.columns["value"].size

    def __getitem__(self, name):
        return self.columns[name]

    def require_rows(self, n_params: int):
        need = max(3, n_params + 1)
        if len(self) < need:
            raise ValueError(f"need at least {need} data rows, got {len(self)}")

    @classmethod
    def from_table(cls, table: ResultTable, provenance: str = "") -> "DataSet":
        known = ("nu_hz", "temp_k", "t_s", "value", "sigma")
        cols = {k: table[k] for k in known if k in table.columns}
        cols = {k: v for k, v in cols.items() if not np.all(np.isnan(v))}
        return cls(cols, provenance)

    @classmethod
    def read_csv(cls, path) -> "DataSet":
        return cls.from_table(ResultTable.read_csv(path), provenance=str(Path(path)))


# ---------------------------------------------------------------------------
# jacobians


def forward_jacobian(fun: Callable, p: np.ndarray, f0=None, lower=None, upper=None) -> np.ndarray:
    p = np.asarray(p, float)
    f0 = fun(p) if f0 is None else f0
    jac = np.empty((f0.size, p.size))
    for j in range(p.size):
        h = FD_STEP * max(abs(p[j]), 1e-8)
        if upper is not None and p[j] + h > upper[j]:
            h = -h
        q = p.copy()
        q[j] += h
        jac[:, j] = (fun(q) - f0) / h
    return jac


def central_jacobian(fun: Callable, p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, float)
    cols = []
    for j in range(p.size):
        h = np.finfo(float).eps ** (1 / 3) * max(abs(p[j]), 1e-8)
        q1, q2 = p.copy(), p.copy()
        q1[j] += h
        q2[j] -= h
        cols.append((fun(q1) - fun(q2)) / (2 * h))
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# engine


def fit_damped_least_squares(
    model: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x,
    y,
    init: Sequence[float],
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    sigma=None,
    names: Sequence[str] | None = None,
    max_iter: int = MAX_ITER,
    xtol: float = XTOL,
    ftol: float = FTOL,
) -> FitResult:
    """Minimise sum(((model(x, p) - y) / sigma)^2) over p within box bounds."""
    y = np.asarray(y, float)
    p = np.array(init, float)
    n = p.size
    names = list(names) if names is not None else [f"p{i}" for i in range(n)]
    lower = np.full(n, -np.inf) if bounds is None else np.asarray(bounds[0], float)
    upper = np.full(n, np.inf) if bounds is None else np.asarray(bounds[1], float)
    if np.any(p < lower) or np.any(p > upper):
        raise ValueError("initial parameters lie outside the bounds")
    w = 1.0 if sigma is None else 1.0 / np.asarray(sigma, float)

    def resid(q):
        return (np.asarray(model(x, q), float) - y) * w

    r = resid(p)
    if not np.all(np.isfinite(r)):
        raise ValueError("model is not finite at the initial parameters")
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = LAMBDA_INIT
    converged, message = False, "maximum iterations reached"
    it = 0
    while it < max_iter:
        it += 1
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        jac = forward_jacobian(resid, p, r, lower, upper)
        a = jac.T @ jac
        g = jac.T @ r
        diag = np.diag(a).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(), 1e-300))
        accepted = False
        while lam <= LAMBDA_MAX:
            try:
                step = np.linalg.solve(a + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = np.clip(p + step, lower, upper)
            r_trial = resid(trial)
            cost_trial = 0.5 * float(r_trial @ r_trial) if np.all(np.isfinite(r_trial)) else math.inf
            rel_step = np.linalg.norm(trial - p) / (np.linalg.norm(p) + xtol)
            if cost_trial < cost:
                rel_drop = (cost - cost_trial) / cost
                p, r, cost = trial, r_trial, cost_trial
                history.append(cost)
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                if rel_step < xtol or rel_drop < ftol:
                    converged, message = True, "relative step or cost change below tolerance"
                break
            if rel_step < xtol:
                # no representable improvement left at this point
                converged, message = True, "relative step below tolerance"
                break
            lam *= 10.0
        if converged:
            break
        if not accepted:
            message = "damping could not find a downhill step"
            break

    result = FitResult(
        dict(zip(names, p.tolist())),
        residual_norm=math.sqrt(2.0 * cost),
        converged=converged,
        iterations=it,
        message=message,
        cost_history=history,
    )
    if converged:
        jac = forward_jacobian(resid, p, r, lower, upper)
        result.uncertainties = _uncertainties(jac, cost, y.size, names)
    return result


def _uncertainties(jac: np.ndarray, cost: float, m: int, names: Sequence[str]) -> dict[str, float]:
    """Linearised covariance scaled by the reduced chi-square (approximate)."""
    n = jac.shape[1]
    dof = max(m - n, 1)
    scale = 2.0 * cost / dof
    a = jac.T @ jac
    out = {}
    dead = np.all(jac == 0, axis=0)
    live = ~dead
    cov = np.zeros((n, n))
    if live.any():
        cov[np.ix_(live, live)] = np.linalg.pinv(a[np.ix_(live, live)])
    for j, name in enumerate(names):
        out[name] = math.inf if dead[j] else math.sqrt(max(cov[j, j] * scale, 0.0))
    return out


# ---------------------------------------------------------------------------
# synthetic data


def seeded_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator for the stream identified by ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def multiplicative_noise(values, rel: float, rng: np.random.Generator) -> np.ndarray:
    """Log-normal scatter: values * exp(rel * N(0, 1))."""
    values = np.asarray(values, float)
    return values * np.exp(rel * rng.standard_normal(values.shape))


def synthetic_t1_data(
    model: T1Model, nus: Sequence[float], temps: Sequence[float], rel_noise: float, seed: int, trial: int = 0
) -> DataSet:
    nu, temp = np.meshgrid(np.asarray(nus, float), np.asarray(temps, float), indexing="ij")
    nu, temp = nu.ravel(), temp.ravel()
    rate = t1_rate(model, nu, temp)
    noisy = multiplicative_noise(rate, rel_noise, seeded_rng(seed, trial))
    return DataSet({"nu_hz": nu, "temp_k": temp, "value": noisy}, provenance=f"synthetic seed={seed} trial={trial}")


# ---------------------------------------------------------------------------
# T1(nu, T) direct + Orbach


T1_PARAMS = ("a_direct", "n_exponent", "a_orbach", "delta_orbach")


def fit_t1_model(
    data: DataSet,
    free: Sequence[str] = T1_PARAMS,
    fixed: Mapping[str, float] | None = None,
    log_space: bool = True,
) -> FitResult:
    """Fit rate = a_direct (2 pi nu)^n T + a_orbach exp(-delta / T).

    ``data['value']`` holds rates (s^-1). Internally the direct coefficient is
    carried as the log of its value at the highest frequency in the data so
    that all parameters are of order one.
    """
    nu, temp, rate = data["nu_hz"], data["temp_k"], data["value"]
    if np.any(rate <= 0):
        raise ValueError("rates must be positive")
    fixed = dict(fixed or {})
    free = [p for p in free if p not in fixed]
    flags = []
    n_freq = np.unique(nu).size
    if np.unique(temp).size < 4:
        raise ValueError("need at least four temperatures")
    if n_freq < 2 and "n_exponent" in free:
        flags.append("ill_posed_n_fixed")
        free.remove("n_exponent")
        fixed.setdefault("n_exponent", 4.0)
    data.require_rows(len(free))
    w_ref = 2 * np.pi * nu.max()

    init_sets = _t1_initial_guesses(nu, temp, rate, w_ref, fixed)
    order = list(T1_PARAMS)
    free_idx = [order.index(p) for p in free]

    def to_internal(full):
        a_d, n, a_o, d = full
        return np.array([math.log(a_d * w_ref**n) if a_d > 0 else -700.0, n, a_o, d])

    def full_from(q, base):
        v = base.copy()
        v[free_idx] = q
        return v

    def rate_model(v):
        ln_a_ref, n, a_o, d = v
        return np.exp(ln_a_ref) * (2 * np.pi * nu / w_ref) ** n * temp + a_o * np.exp(-d / temp)

    lo_all = np.array([-700.0, 0.0, 0.0, 0.0])
    hi_all = np.array([700.0, 6.0, np.inf, 1e4])
    best, best_base = None, None
    for guess in init_sets:
        base = to_internal(guess)
        if log_space:
            model = lambda _x, q, base=base: np.log(np.maximum(rate_model(full_from(q, base)), 1e-300))
            target = np.log(rate)
        else:
            model = lambda _x, q, base=base: rate_model(full_from(q, base))
            target = rate
        res = fit_damped_least_squares(
            model, None, target, base[free_idx], (lo_all[free_idx], hi_all[free_idx]),
            names=[order[i] for i in free_idx],
        )
        if best is None or (res.converged, -res.residual_norm) > (best.converged, -best.residual_norm):
            best, best_base = res, base
    internal = full_from(np.array([best.params[order[i]] for i in free_idx]), best_base)
    ln_a_ref, n, a_o, d = internal
    params = {
        "a_direct": math.exp(ln_a_ref) / w_ref**n,
        "n_exponent": n,
        "a_orbach": a_o,
        "delta_orbach": d,
    }
    unc = {}
    if best.converged:
        for name in ("n_exponent", "a_orbach", "delta_orbach"):
            unc[name] = best.uncertainties.get(name, 0.0) if name in free else 0.0
        if "a_direct" in free:
            # sigma of ln(a_ref) maps to a relative sigma on a_direct
            unc["a_direct"] = params["a_direct"] * best.uncertainties["a_direct"]
        else:
            unc["a_direct"] = 0.0
    return FitResult(
        params, unc, best.residual_norm, best.converged, best.iterations, best.message,
        tuple(flags), best.cost_history,
    )


def _t1_initial_guesses(nu, temp, rate, w_ref, fixed):
    # direct process from the coldest point of each frequency: ln(rate/T) vs ln(omega)
    cold = {}
    for v in np.unique(nu):
        sel = nu == v
        i = np.argmin(temp[sel])
        cold[v] = (temp[sel][i], rate[sel][i])
    freqs = np.array(sorted(cold))
    lr = np.array([math.log(cold[v][1] / cold[v][0]) for v in freqs])
    if freqs.size >= 2:
        slope, icpt = np.polyfit(np.log(2 * np.pi * freqs), lr, 1)
        n0 = float(np.clip(slope, 0.5, 5.5))
    else:
        n0 = 4.0
    n0 = fixed.get("n_exponent", n0)
    a_ref = math.exp(lr[-1])  # at the highest frequency
    a_d0 = fixed.get("a_direct", a_ref / w_ref**n0)
    hot = np.argmax(temp)
    direct_hot = a_d0 * (2 * np.pi * nu[hot]) ** n0 * temp[hot]
    excess = max(rate[hot] - direct_hot, 0.1 * rate[hot])
    guesses = []
    for d0 in (fixed.get("delta_orbach"),) if "delta_orbach" in fixed else (30.0, 70.0, 150.0):
        a_o0 = fixed.get("a_orbach", excess * math.exp(d0 / temp[hot]))
        guesses.append((a_d0, n0, a_o0, d0))
    return guesses


# ---------------------------------------------------------------------------
# Arrhenius and exponential decays


def arrhenius_two_point(t1: float, tau1: float, t2: float, tau2: float) -> float:
    """Activation energy (K) from two decay times, rate = A exp(-dE / T)."""
    if min(tau1, tau2) <= 0 or min(t1, t2) <= 0:
        raise ValueError("temperatures and decay times must be positive")
    return math.log(tau1 / tau2) / (1.0 / t1 - 1.0 / t2)


def fit_arrhenius(temps, decay_times) -> FitResult:
    """Fit 1/tau = A exp(-delta_e / T) by linear regression of ln(1/tau) on 1/T."""
    temps = np.asarray(temps, float)
    taus = np.asarray(decay_times, float)
    if np.any(taus <= 0) or np.any(temps <= 0):
        raise ValueError("decay times and temperatures must be positive")
    if temps.size < 3:
        raise ValueError("need at least three temperatures")
    x = 1.0 / temps
    y = -np.log(taus)
    design = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = temps.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = np.linalg.inv(design.T @ design) * s2
    ln_a, de = coef
    return FitResult(
        {"A": math.exp(ln_a), "delta_e": float(de)},
        {"A": math.exp(ln_a) * math.sqrt(cov[0, 0]), "delta_e": math.sqrt(cov[1, 1])},
        residual_norm=float(np.linalg.norm(resid)),
        converged=True,
        iterations=1,
        message="closed-form linear regression",
    )


def log_linear_decay(t, y) -> tuple[float, float]:
    """Time constant of |y| ~ exp(-t / tau) by a straight-line fit of ln|y|; returns (tau, rms residual)."""
    t = np.asarray(t, float)
    ly = np.log(np.abs(np.asarray(y, float)))
    slope, icpt = np.polyfit(t, ly, 1)
    resid = ly - (slope * t + icpt)
    tau = -1.0 / slope if slope < 0 else math.inf
    return tau, float(np.sqrt(np.mean(resid**2)))


def fit_exponential_decay(t, y) -> FitResult:
    """Fit y = amplitude * exp(-t / tau) + offset with tau > 0."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    if t.size < 5:
        raise ValueError("need at least five points")
    if np.any(np.diff(t) <= 0):
        raise ValueError("time axis must be strictly increasing")
    span = t[-1] - t[0]
    scale = max(np.abs(y).max(), 1e-300)
    if np.ptp(y) <= 1e-12 * scale:
        return FitResult({}, converged=False, message="trace does not decay", flags=("non_decaying",))
    c0 = y[-1]
    a0 = y[0] - c0
    tail = np.abs(y - c0)
    sel = tail > 0.05 * np.abs(a0)
    tau0 = span / 3.0
    if sel.sum() >= 2:
        tau_est, _ = log_linear_decay(t[sel], tail[sel])
        if math.isfinite(tau_est) and tau_est > 0:
            tau0 = tau_est
    t0 = t[0]
    tau_ref = tau0

    def model(tt, q):
        amp, log_tau, off = q
        return amp * np.exp(-(tt - t0) / (tau_ref * math.exp(log_tau))) + off

    max_log = math.log(1e3 * span / tau_ref)
    res = fit_damped_least_squares(
        model, t, y, [a0, 0.0, c0], ([-np.inf, -50.0, -np.inf], [np.inf, max_log, np.inf]),
        names=["amplitude", "log_tau", "offset"],
    )
    tau = tau_ref * math.exp(res.params["log_tau"])
    amplitude = res.params["amplitude"] * math.exp(t0 / tau)
    params = {"amplitude": amplitude, "tau": tau, "offset": res.params["offset"]}
    flags = ()
    converged = res.converged
    if res.params["log_tau"] >= max_log - 1e-9:
        converged, flags = False, ("non_decaying",)
    unc = {}
    if converged:
        unc = {
            "amplitude": res.uncertainties["amplitude"] * math.exp(t0 / tau),
            "tau": tau * res.uncertainties["log_tau"],
            "offset": res.uncertainties["offset"],
        }
    else:
        params = {}
    return FitResult(params, unc, res.residual_norm, converged, res.iterations, res.message, flags, res.cost_history)
