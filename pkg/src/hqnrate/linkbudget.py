"""Free-space optical link budget mapped onto channel and noise parameters."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

from hqnrate.noise import ChannelConfig, HqnParams

# Stored for provenance only; no loss formula consumes them.
GRAVITATIONAL_CONSTANT = 6.674e-11  # N m^2 / kg^2
EARTH_MASS = 5.972e24  # kg


@dataclass(frozen=True)
class LinkBudget:
    """Satellite downlink parameters. Lengths in metres, noise in shot-noise units.

    Apertures are radii: the 30 cm receiver and 10 cm transmitter figures
    are read as diameters.
    """

    altitude: float = 2.0e7
    beam_waist: float = 0.05
    wavelength: float = 800e-9
    rx_aperture: float = 0.15
    tx_aperture: float = 0.05
    eta_det: float = 0.606
    nu_ele: float = 0.041
    epsilon_excess: float = 0.005
    beta_rec: float = 0.95
    pulse_width: float = 3e-9

    def __post_init__(self):
        for name in ("altitude", "beam_waist", "wavelength", "rx_aperture", "tx_aperture"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("eta_det", "beta_rec"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        for name in ("nu_ele", "epsilon_excess"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")


def rayleigh_range(link: LinkBudget) -> float:
    return math.pi * link.beam_waist**2 / link.wavelength


def beam_radius(link: LinkBudget) -> float:
    return link.beam_waist * math.hypot(1.0, link.altitude / rayleigh_range(link))


def far_field_transmissivity(link: LinkBudget) -> float:
    """Fraction of a Gaussian beam's power captured by the receiver aperture."""
    w = beam_radius(link)
    return -math.expm1(-2.0 * link.rx_aperture**2 / w**2)


def effective_channel(link: LinkBudget, base: HqnParams, mu_x=0.0, sigma_x=1.0):
    """Return (ChannelConfig, HqnParams, provenance).

    T = sqrt(eta_det * tau_fs); the classical noise variance absorbs the
    electronic and excess noise.
    """
    tau_fs = far_field_transmissivity(link)
    t_coeff = math.sqrt(link.eta_det * tau_fs)
    var_eff = base.sigma_cl**2 + link.nu_ele + link.epsilon_excess
    noise = replace(base, sigma_cl=math.sqrt(var_eff))
    provenance = {
        "link": asdict(link),
        "rayleigh_range_m": rayleigh_range(link),
        "beam_radius_at_rx_m": beam_radius(link),
        "tau_fs": tau_fs,
        "tau_total": link.eta_det * tau_fs,
        "t_coeff": t_coeff,
        "sigma_cl_base": base.sigma_cl,
        "sigma_cl_eff": noise.sigma_cl,
        "noise_var_eff": var_eff,
        "gravitational_constant": GRAVITATIONAL_CONSTANT,
        "earth_mass_kg": EARTH_MASS,
    }
    return ChannelConfig(t_coeff, mu_x, sigma_x), noise, provenance
