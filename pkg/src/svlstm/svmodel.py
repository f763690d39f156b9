"""Gaussian stochastic-volatility model fitted by Metropolis-within-Gibbs.

State space::

    y_t | h_t        ~ N(0, exp(h_t))                        t = 1..T
    h_t | h_{t-1}    ~ N(mu + phi (h_{t-1} - mu), sigma_eta^2)
    h_0              ~ N(mu, sigma_eta^2 / (1 - phi^2))

Priors: mu ~ N(0, 100), (phi + 1) / 2 ~ Beta(5, 1.5),
sigma_eta^2 ~ Gamma(shape 1/2, rate 1/2).

The latent path is updated site by site with Gaussian random-walk proposals.
Sites of equal parity are conditionally independent given the others, so each
parity class is swept in one vectorised pass. mu is drawn from its Gaussian
full conditional; phi and sigma_eta^2 use independence Metropolis-Hastings
proposals built from the AR(1) likelihood of the path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import DataError, DegenerateError
from .marketdata import ReturnSeries

log = logging.getLogger(__name__)

MU_PRIOR_MEAN = 0.0
MU_PRIOR_VAR = 100.0
PHI_PRIOR_A = 5.0
PHI_PRIOR_B = 1.5
SIGMA2_PRIOR_SHAPE = 0.5
SIGMA2_PRIOR_RATE = 0.5

ZERO_RETURN_FILL = 1e-10
H_FLOOR = math.log(1e-10)
INIT_SMOOTHING = 21
MIN_OBS = 50

TARGET_ACCEPT = (0.30, 0.45)
ADAPT_EVERY = 25


@dataclass(frozen=True)
class SvParams:
    mu: float
    phi: float
    sigma_eta: float

    def __post_init__(self):
        if not abs(self.phi) < 1:
            raise ValueError(f"phi must lie in (-1, 1), got {self.phi}")
        if not self.sigma_eta > 0:
            raise ValueError(f"sigma_eta must be positive, got {self.sigma_eta}")


@dataclass(eq=False)
class SvPosterior:
    """Retained draws. ``h_paths`` has shape (n_retained, T + 1); column 0 is h_0."""

    mu: np.ndarray
    phi: np.ndarray
    sigma_eta: np.ndarray
    h_paths: np.ndarray
    n_burnin: int
    n_retained: int
    accept_counts: dict = field(default_factory=dict)
    step_size: float = float("nan")

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.sigma_eta = np.asarray(self.sigma_eta, dtype=float)
        self.h_paths = np.atleast_2d(np.asarray(self.h_paths, dtype=float))
        n = self.mu.size
        if not (self.phi.size == self.sigma_eta.size == self.h_paths.shape[0] == n == self.n_retained):
            raise ValueError("posterior arrays disagree on the number of retained draws")
        if np.any(np.abs(self.phi) >= 1) or np.any(self.sigma_eta <= 0):
            raise ValueError("retained draw violates |phi| < 1 or sigma_eta > 0")

    @property
    def draws(self) -> list[SvParams]:
        return [SvParams(float(m), float(p), float(s)) for m, p, s in zip(self.mu, self.phi, self.sigma_eta)]

    @property
    def T(self) -> int:
        return self.h_paths.shape[1] - 1

    def summary(self) -> dict:
        return {
            "mu": float(self.mu.mean()),
            "phi": float(self.phi.mean()),
            "sigma_eta": float(self.sigma_eta.mean()),
            "n_retained": self.n_retained,
            "n_burnin": self.n_burnin,
            "accept_counts": dict(self.accept_counts),
        }


@dataclass(frozen=True)
class SvForecast:
    date: np.datetime64 | None
    median_vol: float
    quantiles: dict = field(default_factory=dict)


def prepare_returns(returns) -> np.ndarray:
    """Replace exact zeros by +-1e-10 with alternating sign."""
    y = np.array(returns, dtype=float)
    zeros = np.flatnonzero(y == 0.0)
    y[zeros] = ZERO_RETURN_FILL * np.where(np.arange(zeros.size) % 2 == 0, 1.0, -1.0)
    return y


def initial_path(y: np.ndarray) -> np.ndarray:
    smooth = uniform_filter1d(y * y, size=INIT_SMOOTHING, mode="nearest")
    h = np.log(np.maximum(smooth, 1e-300))
    h = np.maximum(h, H_FLOOR)
    return np.concatenate([h[:1], h])


def _phi_log_prior(phi: float) -> float:
    # Beta(a, b) density on (phi + 1) / 2, constants dropped
    return (PHI_PRIOR_A - 1) * math.log1p(phi) + (PHI_PRIOR_B - 1) * math.log1p(-phi)


def _sigma2_log_prior(s2: float) -> float:
    return (SIGMA2_PRIOR_SHAPE - 1) * math.log(s2) - SIGMA2_PRIOR_RATE * s2


def simulate_sv(T: int, mu: float, phi: float, sigma_eta: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw (returns y_1..y_T, latent path h_0..h_T) from the generative model."""
    rng = np.random.default_rng(seed)
    h = np.empty(T + 1)
    h[0] = mu + sigma_eta / math.sqrt(1 - phi * phi) * rng.standard_normal()
    eta = sigma_eta * rng.standard_normal(T)
    for t in range(1, T + 1):
        h[t] = mu + phi * (h[t - 1] - mu) + eta[t - 1]
    y = np.exp(h[1:] / 2) * rng.standard_normal(T)
    return y, h


class _Sampler:
    """Mutable chain state for one fit. Not shared across threads."""

    def __init__(self, y: np.ndarray, rng: np.random.Generator):
        self.rng = rng
        self.y2 = y * y
        self.T = y.size
        self.h = initial_path(y)
        self.mu = float(self.h.mean())
        self.phi = 0.95
        self.sigma2 = 0.04
        self.log_step = 0.0
        self.accepted = {"h": 0, "phi": 0, "sigma_eta": 0}
        self.proposed = {"h": 0, "phi": 0, "sigma_eta": 0}
        idx = np.arange(self.T + 1)
        self.sweeps = []
        for sites in (idx[0::2], idx[1::2]):
            left = np.where(sites > 0, sites - 1, 1)
            right = np.where(sites < self.T, sites + 1, self.T - 1)
            self.sweeps.append((
                sites,
                left,
                right,
                np.flatnonzero(sites == 0),
                np.flatnonzero(sites == self.T),
                np.flatnonzero(sites > 0),
                self.y2[sites[sites > 0] - 1],
            ))

    def update_h(self) -> None:
        h, mu, phi, rng = self.h, self.mu, self.phi, self.rng
        step = math.exp(self.log_step)
        shrink = 1 + phi * phi
        for sites, left, right, first, last, obs, y2 in self.sweeps:
            # interior conditional: N(mu + phi (h_{t-1} + h_{t+1} - 2 mu) / (1 + phi^2), s2 / (1 + phi^2));
            # the endpoints see one neighbour with variance s2
            mean = mu + phi * (h[left] + h[right] - 2 * mu) / shrink
            var = np.full(sites.size, self.sigma2 / shrink)
            if first.size:
                mean[first] = mu + phi * (h[1] - mu)
                var[first] = self.sigma2
            if last.size:
                mean[last] = mu + phi * (h[self.T - 1] - mu)
                var[last] = self.sigma2
            cur = h[sites]
            prop = cur + step * np.sqrt(var) * rng.standard_normal(sites.size)
            log_ratio = ((cur - mean) ** 2 - (prop - mean) ** 2) / (2 * var)
            c, p = cur[obs], prop[obs]
            log_ratio[obs] += 0.5 * (c - p) + 0.5 * y2 * (np.exp(-c) - np.exp(-p))
            accept = np.log(rng.random(sites.size)) < log_ratio
            h[sites[accept]] = prop[accept]
            self.accepted["h"] += int(accept.sum())
            self.proposed["h"] += sites.size

    def update_mu(self) -> None:
        h, phi, s2 = self.h, self.phi, self.sigma2
        innov = h[1:] - phi * h[:-1]
        prec = ((1 - phi * phi) + self.T * (1 - phi) ** 2) / s2 + 1 / MU_PRIOR_VAR
        num = ((1 - phi * phi) * h[0] + (1 - phi) * innov.sum()) / s2 + MU_PRIOR_MEAN / MU_PRIOR_VAR
        self.mu = num / prec + self.rng.standard_normal() / math.sqrt(prec)

    def update_phi(self) -> None:
        x = self.h[:-1] - self.mu
        z = self.h[1:] - self.mu
        sxx = float(x @ x)
        s2 = self.sigma2
        self.proposed["phi"] += 1
        if sxx <= 0:
            return
        centre = float(x @ z) / sxx
        sd = math.sqrt(s2 / sxx)
        for _ in range(100):
            cand = centre + sd * self.rng.standard_normal()
            if abs(cand) < 1:
                break
        else:
            return
        d0 = self.h[0] - self.mu

        def extra(p):
            # prior plus the stationary h_0 term; the transition part is the proposal itself
            return _phi_log_prior(p) + 0.5 * math.log(1 - p * p) - (1 - p * p) * d0 * d0 / (2 * s2)

        if math.log(self.rng.random()) < extra(cand) - extra(self.phi):
            self.phi = cand
            self.accepted["phi"] += 1

    def update_sigma(self) -> None:
        h, mu, phi = self.h, self.mu, self.phi
        resid = (h[1:] - mu) - phi * (h[:-1] - mu)
        ss = (1 - phi * phi) * (h[0] - mu) ** 2 + float(resid @ resid)
        shape = (self.T + 1) / 2 - 1
        self.proposed["sigma_eta"] += 1
        if shape <= 0 or ss <= 0:
            return
        # inverse-gamma proposal matching the likelihood kernel in sigma^2
        cand = (ss / 2) / self.rng.gamma(shape)
        if math.log(self.rng.random()) < _sigma2_log_prior(cand) - _sigma2_log_prior(self.sigma2):
            self.sigma2 = cand
            self.accepted["sigma_eta"] += 1

    def adapt(self, rate: float, iteration: int) -> None:
        lo, hi = TARGET_ACCEPT
        if rate < lo or rate > hi:
            gain = 1.0 / math.sqrt(1 + iteration / ADAPT_EVERY)
            self.log_step += gain * (rate - 0.5 * (lo + hi)) * 4


def sample_posterior(returns, n_iter: int = 1000, n_burnin: int = 200, seed: int = 0) -> SvPosterior:
    """Run the Metropolis-within-Gibbs chain and keep the post-burn-in draws.

    Random-walk step sizes for the latent path adapt during burn-in toward a
    30-45% acceptance rate and are frozen afterwards.
    """
    if isinstance(returns, ReturnSeries):
        returns = returns.returns
    raw = np.asarray(returns, dtype=float)
    if raw.ndim != 1 or raw.size < MIN_OBS:
        raise DataError(f"need at least {MIN_OBS} returns, got {raw.size}")
    if not np.all(np.isfinite(raw)):
        raise DataError("returns contain non-finite values")
    if np.all(raw == 0):
        raise DegenerateError("all returns are zero: the likelihood is degenerate")
    n_iter, n_burnin = int(n_iter), int(n_burnin)
    if n_burnin < 0 or n_iter <= n_burnin:
        raise ValueError(f"need n_iter > n_burnin >= 0, got n_iter={n_iter}, n_burnin={n_burnin}")

    chain = _Sampler(prepare_returns(raw), np.random.default_rng(seed))
    n_keep = n_iter - n_burnin
    T = chain.T
    mu = np.empty(n_keep)
    phi = np.empty(n_keep)
    sig = np.empty(n_keep)
    paths = np.empty((n_keep, T + 1))
    window_acc = window_prop = 0
    for it in range(n_iter):
        acc_before, prop_before = chain.accepted["h"], chain.proposed["h"]
        chain.update_h()
        chain.update_mu()
        chain.update_phi()
        chain.update_sigma()
        if it < n_burnin:
            window_acc += chain.accepted["h"] - acc_before
            window_prop += chain.proposed["h"] - prop_before
            if (it + 1) % ADAPT_EVERY == 0:
                chain.adapt(window_acc / window_prop, it)
                window_acc = window_prop = 0
        else:
            k = it - n_burnin
            mu[k], phi[k], sig[k] = chain.mu, chain.phi, math.sqrt(chain.sigma2)
            paths[k] = chain.h
    counts = {f"{name}_accepted": chain.accepted[name] for name in chain.accepted}
    counts.update({f"{name}_proposed": chain.proposed[name] for name in chain.proposed})
    return SvPosterior(mu, phi, sig, paths, n_burnin, n_keep, counts, math.exp(chain.log_step))


def predictive_draws(post: SvPosterior, seed: int = 0) -> np.ndarray:
    """One draw of h_{T+1} per retained posterior draw."""
    if post.n_retained == 0:
        raise DataError("empty posterior")
    rng = np.random.default_rng(seed)
    h_last = post.h_paths[:, -1]
    return post.mu + post.phi * (h_last - post.mu) + post.sigma_eta * rng.standard_normal(post.n_retained)


def forecast_one_step(post: SvPosterior, seed: int = 0, quantiles=(), date=None) -> SvForecast:
    """Predictive median (and optional quantiles) of sqrt(exp(h_{T+1})).

    Quantiles are order statistics (inverted CDF), which commute with the
    monotone map h -> exp(h / 2); for an even draw count the median is the
    lower middle draw.
    """
    h_next = predictive_draws(post, seed)
    vol = np.exp(h_next / 2)
    levels = sorted(float(q) for q in quantiles)
    qs = np.quantile(vol, [0.5, *levels], method="inverted_cdf")
    return SvForecast(
        date=None if date is None else np.datetime64(date, "D"),
        median_vol=float(qs[0]),
        quantiles={q: float(v) for q, v in zip(levels, qs[1:])},
    )


def window_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


def _fit_and_forecast(y, date, n_iter, n_burnin, seed, quantiles):
    post = sample_posterior(y, n_iter=n_iter, n_burnin=n_burnin, seed=seed)
    return forecast_one_step(post, seed=seed + 1, quantiles=quantiles, date=date)


def rolling_sv_forecast(
    returns: ReturnSeries,
    train_len: int = 504,
    n_iter: int = 1000,
    n_burnin: int = 200,
    seed: int = 0,
    quantiles=(),
    n_jobs: int = 1,
    progress: bool = False,
) -> list[SvForecast]:
    """Refit on each trailing ``train_len`` window and forecast the next day.

    Forecast k uses returns k .. k+train_len-1 and is dated with the date of
    return k+train_len.
    """
    n = len(returns)
    if n <= train_len:
        raise DataError(f"series of length {n} is not longer than train_len={train_len}")
    r, dates = returns.returns, returns.dates
    jobs = [
        (r[k:k + train_len], dates[k + train_len], n_iter, n_burnin, window_seed(seed, k), tuple(quantiles))
        for k in range(n - train_len)
    ]
    if n_jobs == 1:
        out = []
        for k, job in enumerate(jobs):
            out.append(_fit_and_forecast(*job))
            if progress and (k + 1) % 250 == 0:
                log.info("sv rolling forecast %d/%d", k + 1, len(jobs))
        return out
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(_fit_and_forecast)(*job) for job in jobs)
