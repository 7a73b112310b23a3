"""Parameter algebra: equation of state, limiting speeds, viscous compatibility."""

from dataclasses import dataclass, replace, asdict
import math


class ParameterError(ValueError):
    """Base class for rejected parameter sets."""


class InvalidStateLaw(ParameterError):
    pass


class DegenerateTriplePoint(ParameterError):
    pass


ELL_GAP = 1e-6


def r_star(d, ell):
    return (d + ell) / (ell + math.sqrt(d))


def r_plus(d, ell):
    return 1.0 + (d - 1) / (1.0 + math.sqrt(ell)) ** 2


def e_threshold(ell):
    """Speed at which the compatibility exponent changes sign."""
    return (2.0 + ell) / (1.0 + ell)


def compat_exponent_raw(ell, r):
    return 0.5 * (ell * (r - 1.0) + r - 2.0)


@dataclass(frozen=True)
class Parameters:
    d: int
    gamma: float
    ell: float
    p: float
    r_star: float
    r_plus: float
    r_eye: float
    mu: float = 0.0
    mu_prime: float = 0.0
    regime: str = "Euler"
    r: float | None = None
    ns_admissible: bool = False

    @property
    def e(self):
        if self.r is None:
            return None
        return compat_exponent_raw(self.ell, self.r)

    @property
    def phi(self):
        return math.sqrt(self.ell) / 2.0

    @property
    def w_e(self):
        return self.ell * (self.r - 1.0) / self.d

    def with_speed(self, r):
        if not r > 1.0:
            raise ParameterError(f"front speed must exceed 1, got {r}")
        return replace(self, r=float(r))

    def record(self):
        """Flat key-value record used in configs and output metadata."""
        return {
            "d": self.d,
            "gamma": self.gamma,
            "ell": self.ell,
            "p": self.p,
            "r": self.r,
            "e": self.e,
            "mu": self.mu,
            "mu_prime": self.mu_prime,
            "regime": self.regime,
        }

    def as_dict(self):
        out = asdict(self)
        out["e"] = self.e
        return out


def derive(d=3, gamma=None, mu=0.0, mu_prime=0.0, regime="Euler", ell=None, r=None):
    """Build a Parameters record from either gamma or ell."""
    if (gamma is None) == (ell is None):
        raise ParameterError("give exactly one of gamma and ell")
    if gamma is not None:
        gamma = float(gamma)
        if not gamma > 1.0:
            raise InvalidStateLaw(f"adiabatic exponent must exceed 1, got {gamma}")
        ell = 2.0 / (gamma - 1.0)
    else:
        ell = float(ell)
        if not ell > 0.0:
            raise InvalidStateLaw(f"ell must be positive, got {ell}")
        gamma = 1.0 + 2.0 / ell
    if d not in (2, 3):
        raise ParameterError(f"dimension must be 2 or 3, got {d}")
    if mu + mu_prime < 0:
        raise ParameterError("viscosities must satisfy mu + mu' >= 0")
    if regime not in ("Euler", "NavierStokes"):
        raise ParameterError(f"unknown regime {regime!r}")
    if abs(ell - d) < ELL_GAP:
        raise DegenerateTriplePoint(f"ell={ell} coincides with d={d}: degenerate triple point")

    rs, rp = r_star(d, ell), r_plus(d, ell)
    ns_ok = d == 3 and ell > threshold_ell(3)[0]
    if regime == "NavierStokes" and not ns_ok:
        raise ParameterError("Navier-Stokes regime needs d=3 and ell > sqrt(3)")
    par = Parameters(
        d=d,
        gamma=gamma,
        ell=ell,
        p=1.0 + 4.0 / ell,
        r_star=rs,
        r_plus=rp,
        r_eye=rs if ell < d else rp,
        mu=float(mu),
        mu_prime=float(mu_prime),
        regime=regime,
        ns_admissible=ns_ok,
    )
    if r is not None:
        par = par.with_speed(r)
    return par


def compat_exponent(params, r):
    if not r > 1.0:
        raise ParameterError(f"front speed must exceed 1, got {r}")
    return compat_exponent_raw(params.ell, r)


def threshold_ell(d):
    """Return (ell_0, ns_regime_flag).

    The flag is False when the formula gives a non-positive value, meaning
    the compatibility condition holds automatically (or the formula is void).
    """
    den = d - 1.0 - math.sqrt(d)
    if den == 0.0:
        raise ParameterError(f"threshold undefined for d={d}")
    val = (2.0 * math.sqrt(d) - d) / den
    return val, val > 0.0


def from_record(rec):
    """Inverse of Parameters.record (accepts either gamma or ell)."""
    kw = dict(d=int(rec.get("d", 3)), mu=rec.get("mu", 0.0), mu_prime=rec.get("mu_prime", 0.0),
              regime=rec.get("regime", "Euler"), r=rec.get("r"))
    if rec.get("gamma") is not None:
        return derive(gamma=rec["gamma"], **kw)
    return derive(ell=rec["ell"], **kw)
