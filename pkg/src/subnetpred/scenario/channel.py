"""Indoor-factory channel pieces: InF-DL path loss, exponentially correlated
shadowing advanced along trajectories, AR(1) small-scale fading with a
Doppler-matched coefficient, and the soft LOS/NLOS mixing gain."""

from __future__ import annotations

import numpy as np
from scipy.special import j0


def pathloss_inf_db(dist_m, freq_hz, los=True):
    """3GPP InF-DL path loss in dB; distance clamped to the 1 m model floor.

    LOS : 31.84 + 21.5 log10(d) + 19 log10(f_GHz)
    NLOS: max(LOS, 18.6 + 35.7 log10(d) + 20 log10(f_GHz))
    """
    d = np.maximum(np.asarray(dist_m, dtype=float), 1.0)
    f_ghz = freq_hz / 1e9
    pl_los = 31.84 + 21.5 * np.log10(d) + 19.0 * np.log10(f_ghz)
    if los:
        return pl_los
    pl_nlos = 18.6 + 35.7 * np.log10(d) + 20.0 * np.log10(f_ghz)
    return np.maximum(pl_los, pl_nlos)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin, floor=1e-20):
    return 10.0 * np.log10(np.maximum(np.asarray(lin, dtype=float), floor))


def watts_to_dbm(watts, floor=1e-20):
    return linear_to_db(watts, floor) + 30.0


def noise_power_w(bandwidth_hz, n_subbands, noise_figure_db):
    """Thermal noise over one sub-band: -174 dBm/Hz + 10log10(B/Omega) + NF."""
    n_dbm = -174.0 + 10.0 * np.log10(bandwidth_hz / n_subbands) + noise_figure_db
    return 10.0 ** (n_dbm / 10.0) * 1e-3


def fading_coefficient(doppler_hz, dt):
    """Per-cycle AR(1) coefficient from the Clarke model: J0(2 pi f_d dt)."""
    return float(j0(2.0 * np.pi * doppler_hz * dt))


def _complex_normal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


class Ar1Field:
    """Gaussian value per link, correlated along the trajectory.

    Each advance uses coefficient exp(-displacement / decorrelation), the
    exponential (Gudmundson-style) correlation evaluated at the distance the
    link endpoints moved since the previous cycle.
    """

    def __init__(self, n, std, decorrelation, rng):
        self.std = std
        self.decorrelation = decorrelation
        self.values = std * rng.standard_normal(n)

    def advance(self, displacement, rng):
        a = np.exp(-np.asarray(displacement, dtype=float) / self.decorrelation)
        noise = rng.standard_normal(self.values.shape)
        self.values = a * self.values + np.sqrt(1.0 - a**2) * self.std * noise


class ComplexAr1:
    """Unit-power complex Gaussian AR(1) process (Rayleigh envelope)."""

    def __init__(self, shape, rho, rng):
        self.rho = rho
        self.values = _complex_normal(rng, shape)

    def advance(self, rng):
        self.values = (self.rho * self.values
                       + np.sqrt(1.0 - self.rho**2) * _complex_normal(rng, self.values.shape))


def rician(scatter, k_linear, los_phase):
    """Rician fading sample: fixed specular term plus scattered component."""
    spec = np.sqrt(k_linear / (k_linear + 1.0)) * np.exp(1j * los_phase)
    return spec + np.sqrt(1.0 / (k_linear + 1.0)) * scatter


def soft_los_weight(latent):
    """Logistic squash of the spatially correlated latent into psi in [0, 1]."""
    return 1.0 / (1.0 + np.exp(-np.asarray(latent, dtype=float)))


def channel_gain(psi, h_los_sq, h_nlos_sq, pl_los_lin, pl_nlos_lin,
                 sh_los_lin=1.0, sh_nlos_lin=1.0):
    """Linear power gain of one link at its current soft LOS state.

    gain = psi*|H_LOS|^2 + sqrt(1-psi^2)*|H_NLOS|^2 where each |H|^2 is the
    product of fading power, linear path gain, and linear shadowing.
    """
    psi = np.asarray(psi, dtype=float)
    g_los = h_los_sq * pl_los_lin * sh_los_lin
    g_nlos = h_nlos_sq * pl_nlos_lin * sh_nlos_lin
    return psi * g_los + np.sqrt(1.0 - psi**2) * g_nlos
