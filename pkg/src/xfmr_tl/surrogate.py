"""Analytic lumped-element model of a 1:1 on-chip transformer.

Stands in for an EM solver: geometry -> (Lp, Ls, k, Qp, Qs) per technology,
and circuit parameters + shunt tuning caps -> complex input impedance.

The scalar API works on small dataclasses; the ``*_arrays`` functions are the
vectorized kernels used for grid generation. The scalar functions call the
array kernels, so both paths share one implementation.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml

MU0 = 4e-7 * np.pi
UM = 1e-6
FF = 1e-15
GHZ = 1e9

# octagonal current-sheet coefficients
C1_SHEET = 2.25
C2_SHEET = 3.55
# coupling decays over a length of 5 % of the outer diameter
GAP_DECAY_FRAC = 0.05


class SurrogateError(ValueError):
    """Invalid geometry or technology parameters."""


@dataclass(frozen=True)
class TechnologyProfile:
    name: str
    sigma: float  # S/m
    t_metal: float  # um
    h_gap: float  # um
    k_max: float
    freq: float  # GHz
    z_load: float  # ohm

    def __post_init__(self):
        checks = {
            "sigma": self.sigma > 0,
            "t_metal": self.t_metal > 0,
            "h_gap": self.h_gap > 0,
            "k_max": 0 < self.k_max < 1,
            "freq": self.freq > 0,
            "z_load": self.z_load > 0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise SurrogateError(f"technology {self.name!r}: invalid {', '.join(bad)}")

    @property
    def omega(self) -> float:
        return 2 * np.pi * self.freq * GHZ

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Geometry:
    d_out: float  # um
    w_p: float  # um
    w_s: float  # um


@dataclass(frozen=True)
class CircuitParams:
    l_p: float  # H
    l_s: float  # H
    k: float
    q_p: float
    q_s: float


@dataclass(frozen=True)
class TuningCaps:
    c1: float  # fF
    c2: float  # fF


@dataclass(frozen=True)
class DesignImpedance:
    re: float  # ohm
    im: float  # ohm

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)


def check_geometry(d_out, w_p, w_s):
    d_out, w_p, w_s = (np.asarray(a, dtype=np.float64) for a in (d_out, w_p, w_s))
    if np.any(w_p <= 0) or np.any(w_s <= 0) or np.any(d_out <= 0):
        raise SurrogateError("geometry dimensions must be positive")
    bad = ~(d_out > 2 * np.maximum(w_p, w_s))
    if np.any(bad):
        i = int(np.flatnonzero(np.atleast_1d(bad))[0])
        d, a, b = (np.atleast_1d(x)[i] if np.ndim(x) else x for x in (d_out, w_p, w_s))
        raise SurrogateError(
            f"winding does not close: d_out={d} um must exceed 2*max(w_p={a}, w_s={b}) um"
        )


def _winding(d_out_um, w_um, tech: TechnologyProfile):
    """Inductance and Q of one single-turn winding."""
    d_avg = (d_out_um - w_um) * UM
    w = w_um * UM
    fill = w_um / (d_out_um - w_um)
    ind = C1_SHEET * MU0 * d_avg / (1.0 + C2_SHEET * fill)

    omega = tech.omega
    length = np.pi * d_avg
    skin = np.sqrt(2.0 / (omega * MU0 * tech.sigma))
    skin_eff = skin * (1.0 - np.exp(-(tech.t_metal * UM) / skin))
    res = length / (tech.sigma * w * skin_eff)
    return ind, omega * ind / res


def geometry_to_circuit_arrays(d_out, w_p, w_s, tech: TechnologyProfile):
    """Vectorized geometry -> (l_p, l_s, k, q_p, q_s); inputs in um."""
    check_geometry(d_out, w_p, w_s)
    d_out, w_p, w_s = (np.asarray(a, dtype=np.float64) for a in (d_out, w_p, w_s))
    l_p, q_p = _winding(d_out, w_p, tech)
    l_s, q_s = _winding(d_out, w_s, tech)
    ratio = np.minimum(w_p, w_s) / np.maximum(w_p, w_s)
    k = tech.k_max * np.sqrt(ratio) * np.exp(-tech.h_gap / (GAP_DECAY_FRAC * d_out))
    return l_p, l_s, k, q_p, q_s


def _parallel(z, c_ff, omega):
    # zero capacitance is an open circuit: z || inf = z
    c = np.asarray(c_ff, dtype=np.float64) * FF
    y = 1.0 / z + 1j * omega * c
    return 1.0 / y


def input_impedance_arrays(l_p, l_s, k, q_p, q_s, c1, c2, tech: TechnologyProfile):
    """Vectorized Z_in of the loaded transformer with shunt caps (c in fF)."""
    omega = tech.omega
    l_p, l_s, k, q_p, q_s = (np.asarray(a, dtype=np.float64) for a in (l_p, l_s, k, q_p, q_s))
    r_p = omega * l_p / q_p
    r_s = omega * l_s / q_s
    m = k * np.sqrt(l_p * l_s)
    z_sec = r_s + 1j * omega * l_s + _parallel(np.complex128(tech.z_load), c2, omega)
    z_p = r_p + 1j * omega * l_p + (omega * m) ** 2 / z_sec
    return _parallel(z_p, c1, omega)


def geometry_to_circuit(g: Geometry, tech: TechnologyProfile) -> CircuitParams:
    out = geometry_to_circuit_arrays(
        np.array([g.d_out]), np.array([g.w_p]), np.array([g.w_s]), tech
    )
    return CircuitParams(*(float(a[0]) for a in out))


def input_impedance(y: CircuitParams, caps: TuningCaps, tech: TechnologyProfile) -> DesignImpedance:
    if min(caps.c1, caps.c2) < 0:
        raise SurrogateError("tuning capacitances must be non-negative")
    z = input_impedance_arrays(
        *(np.array([v]) for v in (y.l_p, y.l_s, y.k, y.q_p, y.q_s, caps.c1, caps.c2)), tech
    )[0]
    return DesignImpedance(float(z.real), float(z.imag))


# -- configuration ---------------------------------------------------------

DEFAULT_PROFILES = Path(__file__).parent / "configs" / "profiles.yaml"


def load_profiles(path: str | Path | None = None) -> dict[str, TechnologyProfile]:
    """Read the ``technologies`` section of a profiles YAML file."""
    with open(path or DEFAULT_PROFILES) as fh:
        doc = yaml.safe_load(fh)
    techs = doc.get("technologies", {})
    # PyYAML reads exponent literals like 5.8e7 as strings
    return {
        name: TechnologyProfile(name=name, **{k: float(v) for k, v in fields.items()})
        for name, fields in techs.items()
    }


def get_profile(name: str, path: str | Path | None = None) -> TechnologyProfile:
    profiles = load_profiles(path)
    try:
        return profiles[name]
    except KeyError:
        raise KeyError(
            f"unknown technology profile {name!r}; known: {', '.join(sorted(profiles))}"
        ) from None
