"""Regenerate the blind-SNR lookup table frozen in prosaudit/wada.py.

Model: clean speech amplitude |x| ~ Gamma(shape 0.4) with random sign,
noise n ~ N(0, sigma^2); the statistic G = ln E|z| - E ln|z| of the
mixture z = x + n is computed by quadrature for each SNR on a 1 dB grid
from -20 to 100 dB (signal power fixed at 1).

E|a + n| has a closed form in erf; E ln|a + n| reduces to the expectation
of digamma(1/2 + K) with K ~ Poisson(a^2 / (2 sigma^2)), via the
noncentral chi-square representation of (a + n)^2. The outer Gamma
integral is split at the noise scale, with an a = theta * s^(1/k)
substitution absorbing the a^(k-1) singularity near zero.

Run:  python tools/make_wada_table.py
Prints the table as Python source and checks the closed-form limits
G(+inf) = ln(k) - digamma(k) and G(-inf) = ln sqrt(2/pi) - (digamma(1/2)
+ ln 2) / 2.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import digamma, erf, gammaln

K_SHAPE = 0.4
THETA = 1.0 / math.sqrt(K_SHAPE * (K_SHAPE + 1.0))  # unit signal power
DB_GRID = np.arange(-20, 101)


def expected_log_abs_normal(mu: float) -> float:
    """E[ln |N(mu, 1)|] via the Poisson-digamma mixture (or its asymptote)."""
    lam = mu * mu / 2.0
    if lam > 1e5:
        return math.log(mu) - 1.0 / (2.0 * mu * mu) - 3.0 / (4.0 * mu ** 4)
    if lam == 0.0:
        return 0.5 * (math.log(2.0) + digamma(0.5))
    half_width = 12.0 * math.sqrt(lam) + 30.0
    ks = np.arange(max(0, math.floor(lam - half_width)), math.ceil(lam + half_width) + 1)
    logw = ks * math.log(lam) - lam - gammaln(ks + 1)
    w = np.exp(logw)
    w /= w.sum()
    return 0.5 * (math.log(2.0) + float(np.sum(w * digamma(0.5 + ks))))


def gamma_expect(F, sigma: float) -> float:
    """E[F(A)] for A ~ Gamma(K_SHAPE, THETA), robust to structure near A ~ sigma."""
    k, theta = K_SHAPE, THETA
    a_star = min(max(50.0 * sigma, 1e-12), theta)

    def inner_small(s):
        a = theta * s ** (1.0 / k)
        return math.exp(-s ** (1.0 / k)) * F(a)

    s_star = (a_star / theta) ** k
    i1, _ = integrate.quad(inner_small, 0.0, s_star, epsabs=1e-13, epsrel=1e-12,
                           limit=400)
    i1 /= math.gamma(k) * k

    def inner_large(a):
        return a ** (k - 1.0) * math.exp(-a / theta) * F(a)

    i2, _ = integrate.quad(inner_large, a_star, np.inf, epsabs=1e-13, epsrel=1e-12,
                           limit=400)
    i2 /= math.gamma(k) * theta ** k
    return i1 + i2


def g_statistic(snr_db: float) -> float:
    sigma = 10.0 ** (-snr_db / 20.0)

    def f_abs(a):
        return a * erf(a / (sigma * math.sqrt(2.0))) + sigma * math.sqrt(
            2.0 / math.pi) * math.exp(-a * a / (2.0 * sigma * sigma))

    def f_ln(a):
        return math.log(sigma) + expected_log_abs_normal(a / sigma)

    return math.log(gamma_expect(f_abs, sigma)) - gamma_expect(f_ln, sigma)


def main():
    g_inf = math.log(K_SHAPE) - digamma(K_SHAPE)
    g_noise = 0.5 * math.log(2.0 / math.pi) + 0.5 * math.log(2.0) - 0.5 * (
        digamma(0.5) + math.log(2.0)) + 0.0
    # simplify: ln E|n| - E ln|n| for half-normal
    g_noise = 0.5 * math.log(2.0 / math.pi) - 0.5 * (digamma(0.5) + math.log(2.0))
    print(f"# G(snr -> inf)  = {g_inf:.8f}")
    print(f"# G(snr -> -inf) = {g_noise:.8f}")

    values = [g_statistic(float(db)) for db in DB_GRID]
    assert values[0] > g_noise and values[-1] < g_inf
    assert all(b > a for a, b in zip(values, values[1:])), "curve must be monotone"

    print("G_TABLE = np.array([")
    for i in range(0, len(values), 5):
        chunk = ", ".join(f"{v:.8f}" for v in values[i: i + 5])
        print(f"    {chunk},")
    print("])")


if __name__ == "__main__":
    main()
