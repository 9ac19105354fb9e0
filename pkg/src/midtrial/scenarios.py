"""Ground-truth scenario generators for the simulation studies.

Fixed scenarios reproduce the three-by-three toxicity/efficacy grid
with its historical mid-trial data.  Random scenarios draw monotone
toxicity curves around a hidden pivot dose near the target, plus
shape-constrained efficacy curves, so results do not hinge on any
hand-picked configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .skeleton import DoseData

STRUCTURE_DOSES = (300.0, 900.0, 1500.0, 2100.0, 2400.0)
D_REF = 2400.0

FIXED_TOX = {
    "T1": (0.05, 0.10, 0.15, 0.20, 0.60),
    "T2": (0.05, 0.10, 0.15, 0.30, 0.60),
    "T3": (0.05, 0.10, 0.15, 0.50, 0.60),
}
FIXED_EFF = {
    "E1": (0.05, 0.10, 0.15, 0.20, 0.60),
    "E2": (0.05, 0.10, 0.15, 0.30, 0.60),
    "E3": (0.05, 0.10, 0.15, 0.50, 0.60),
}
HISTORICAL = DoseData(n=(3, 3, 6, 0, 6), t=(0, 0, 1, 0, 3), u=(0, 0, 0, 0, 3))

# probabilities are clipped into this open interval before any inverse
# normal transform, so astronomically extreme draws cannot produce nan
_P_FLOOR = 1e-300
_P_CEIL = 1.0 - 1e-16


@dataclass(frozen=True)
class RandomGenParams:
    """Knobs for the random-scenario recipes.

    The defaults place the pivot dose at the target on average, with
    mild noise there and heavy-tailed squared-normal gaps elsewhere.
    ``insert_mode`` selects how the inserted dose's truth is centered:
    'as-printed' uses the probability difference (p_high - p_low) / 2
    directly on the z scale, 'z-midpoint' averages the z values of the
    neighbors instead, which keeps the truth between them.
    """

    phi: float = 0.30
    sigma0: float = 0.05
    sigma_star: float = 0.05
    mu1: float | None = None
    mu2: float | None = None
    sigma1: float = 0.5
    sigma2: float = 0.5
    delta1: float = 0.5
    q_max: float = 0.8
    shape: str = "monotone"
    insert_mode: str = "as-printed"

    def __post_init__(self):
        if not 0.0 < self.phi < 1.0:
            raise ValueError("phi must lie in (0,1)")
        if self.shape not in ("monotone", "unimodal"):
            raise ValueError(f"unknown efficacy shape: {self.shape!r}")
        if self.insert_mode not in ("as-printed", "z-midpoint"):
            raise ValueError(f"unknown insert mode: {self.insert_mode!r}")
        if not self.delta1 < self.q_max <= 1.0:
            raise ValueError("need delta1 < q_max <= 1")

    @property
    def mean_below(self) -> float:
        return self.phi - 0.5 if self.mu1 is None else self.mu1

    @property
    def mean_above(self) -> float:
        return self.phi + 0.5 if self.mu2 is None else self.mu2


@dataclass(frozen=True)
class ScenarioTruth:
    """True per-dose probabilities plus whatever a replicate needs.

    Fixed scenarios carry the historical data and the known inserted
    dose; random scenarios carry the removed pivot position and the
    rule for drawing the inserted dose's truth once a gap is chosen.
    True MTD/OBD are indices into ``doses``; random scenarios leave
    them None because the truth of the inserted dose is drawn per
    replicate.
    """

    label: str
    doses: tuple[float, ...]
    p: tuple[float, ...]
    q: tuple[float, ...]
    true_mtd: int | None = None
    true_obd: int | None = None
    historical: DoseData | None = None
    d_star_index: int | None = None
    pivot: int | None = None
    p_star_rule: RandomGenParams | None = None

    def __post_init__(self):
        if not (len(self.doses) == len(self.p) == len(self.q)):
            raise ValueError("doses, p, q must align")
        if any(not 0.0 < x < 1.0 for x in self.p + self.q):
            raise ValueError("probabilities must lie in (0,1)")

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "doses": list(self.doses),
            "p": list(self.p),
            "q": list(self.q),
            "true_mtd": self.true_mtd,
            "true_obd": self.true_obd,
            "d_star_index": self.d_star_index,
            "pivot": self.pivot,
        }
        if self.historical is not None:
            out["historical"] = {
                "n": list(self.historical.n),
                "t": list(self.historical.t),
                "u": list(self.historical.u),
            }
        if self.p_star_rule is not None:
            r = self.p_star_rule
            out["p_star_rule"] = {
                "phi": r.phi,
                "sigma0": r.sigma0,
                "sigma_star": r.sigma_star,
                "mu1": r.mu1,
                "mu2": r.mu2,
                "sigma1": r.sigma1,
                "sigma2": r.sigma2,
                "delta1": r.delta1,
                "q_max": r.q_max,
                "shape": r.shape,
                "insert_mode": r.insert_mode,
            }
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> ScenarioTruth:
        hist = raw.get("historical")
        rule = raw.get("p_star_rule")
        return cls(
            label=raw["label"],
            doses=tuple(raw["doses"]),
            p=tuple(raw["p"]),
            q=tuple(raw["q"]),
            true_mtd=raw.get("true_mtd"),
            true_obd=raw.get("true_obd"),
            historical=DoseData(
                n=tuple(hist["n"]), t=tuple(hist["t"]), u=tuple(hist["u"])
            )
            if hist
            else None,
            d_star_index=raw.get("d_star_index"),
            pivot=raw.get("pivot"),
            p_star_rule=RandomGenParams(**rule) if rule else None,
        )


_TIE_TOL = 1e-9


def true_mtd_index(p, phi1: float) -> int:
    """Dose whose truth is closest to the target; ties take the higher."""
    gaps = [abs(x - phi1) for x in p]
    best = min(gaps)
    return max(i for i, g in enumerate(gaps) if g <= best + _TIE_TOL)


def true_obd_index(p, q, phi1: float) -> int | None:
    """Most efficacious dose among those with true toxicity at or below
    the target; ties take the lower dose; None when nothing qualifies."""
    admissible = [i for i, x in enumerate(p) if x <= phi1 + _TIE_TOL]
    if not admissible:
        return None
    best = max(q[i] for i in admissible)
    return min(i for i in admissible if q[i] >= best - _TIE_TOL)


def fixed_scenarios(phi1: float = 0.30) -> list[ScenarioTruth]:
    """The nine toxicity-by-efficacy combinations with historical data."""
    out = []
    for t_label, p in FIXED_TOX.items():
        for e_label, q in FIXED_EFF.items():
            out.append(
                ScenarioTruth(
                    label=f"{t_label}{e_label}",
                    doses=STRUCTURE_DOSES,
                    p=p,
                    q=q,
                    true_mtd=true_mtd_index(p, phi1),
                    true_obd=true_obd_index(p, q, phi1),
                    historical=HISTORICAL,
                    d_star_index=3,
                )
            )
    return out


def _clip(p: float) -> float:
    return min(max(p, _P_FLOOR), _P_CEIL)


def random_toxicity(
    rng: np.random.Generator, params: RandomGenParams
) -> tuple[int, tuple[float, ...]]:
    """Draw a nondecreasing five-level toxicity curve around a pivot.

    The pivot (position 1..3 of 0..4, uniform) sits at the target on
    average; its neighbors are pushed to the correct side of the target
    by the indicator terms, and the outer doses recurse outward with
    squared-normal gaps on the z scale.  Draw order: pivot, center
    noise, lower neighbor noise, upper neighbor noise, then the lower
    chain from the pivot downward and the upper chain upward.

    Returns the pivot position and the five probabilities.
    """
    phi = params.phi
    z_phi = norm.ppf(phi)
    pivot = int(rng.integers(1, 4))
    eps_c = rng.normal(z_phi, params.sigma0)
    eps_lo = rng.normal(params.mean_below, params.sigma1)
    eps_hi = rng.normal(params.mean_above, params.sigma2)

    p = [0.0] * 5
    p_c = float(norm.cdf(eps_c))
    p[pivot] = _clip(p_c)
    z_fold = norm.ppf(_clip(2 * phi - p_c))
    arg_lo = eps_c - (eps_c - z_fold) * (eps_c > z_phi) - eps_lo**2
    arg_hi = eps_c + (z_fold - eps_c) * (eps_c < z_phi) + eps_hi**2
    p[pivot - 1] = _clip(float(norm.cdf(arg_lo)))
    p[pivot + 1] = _clip(float(norm.cdf(arg_hi)))

    for k in range(pivot - 2, -1, -1):
        eps = rng.normal(params.mean_below, params.sigma1)
        p[k] = _clip(float(norm.cdf(norm.ppf(p[k + 1]) - eps**2)))
    for k in range(pivot + 2, 5):
        eps = rng.normal(params.mean_above, params.sigma2)
        p[k] = _clip(float(norm.cdf(norm.ppf(p[k - 1]) + eps**2)))
    return pivot, tuple(p)


def inserted_dose_truth(
    rng: np.random.Generator,
    p_low: float,
    p_high: float,
    sigma_star: float,
    mode: str = "as-printed",
) -> float:
    """True toxicity of a dose squeezed between two known truths.

    'as-printed' centers the z-scale draw at (p_high - p_low) / 2, a
    probability difference; with a wide gap this can land above p_high.
    'z-midpoint' centers at the midpoint of the neighbor z values and
    always stays between them at sigma_star = 0.
    """
    if not p_low < p_high:
        raise ValueError("need p_low < p_high")
    if mode == "as-printed":
        center = (p_high - p_low) / 2.0
    elif mode == "z-midpoint":
        center = (norm.ppf(_clip(p_low)) + norm.ppf(_clip(p_high))) / 2.0
    else:
        raise ValueError(f"unknown insert mode: {mode!r}")
    eps = rng.normal(center, sigma_star)
    return _clip(float(norm.cdf(eps)))


def random_efficacy(
    rng: np.random.Generator, params: RandomGenParams, levels: int = 5
) -> tuple[float, ...]:
    """Draw an efficacy curve under a shape constraint.

    An anchor dose gets efficacy in [delta1, q_max]; the rest fill in
    by chained uniforms.  Monotone curves decrease below the anchor and
    increase above it.  Unimodal curves pick a peak, bridge anchor and
    peak with sorted uniforms in [q_anchor, q_peak], and decay outward
    on both flanks.  Draw order: anchor index, anchor value, (peak
    index, peak value, bridge), then below-side fills, then above-side.
    """
    q = [0.0] * levels
    anchor = int(rng.integers(levels))
    q[anchor] = float(rng.uniform(params.delta1, params.q_max))

    if params.shape == "monotone":
        for k in range(anchor - 1, -1, -1):
            q[k] = float(rng.uniform(0.0, q[k + 1]))
        for k in range(anchor + 1, levels):
            q[k] = float(rng.uniform(q[k - 1], params.q_max))
        return tuple(_clip(x) for x in q)

    peak = int(rng.integers(levels))
    if peak == anchor:
        q_peak = q[anchor]
    else:
        q_peak = float(rng.uniform(q[anchor], params.q_max))
        q[peak] = q_peak
        lo, hi = sorted((anchor, peak))
        bridge = sorted(rng.uniform(q[anchor], q_peak, hi - lo - 1))
        if anchor < peak:
            q[lo + 1 : hi] = [float(x) for x in bridge]
        else:
            q[lo + 1 : hi] = [float(x) for x in reversed(bridge)]
    lo, hi = sorted((anchor, peak))
    for k in range(lo - 1, -1, -1):
        q[k] = float(rng.uniform(0.0, q[k + 1]))
    for k in range(hi + 1, levels):
        q[k] = float(rng.uniform(0.0, q[k - 1]))
    return tuple(_clip(x) for x in q)


def random_scenario(
    rng: np.random.Generator, params: RandomGenParams
) -> ScenarioTruth:
    """One random replicate's ground truth over the five-level structure.

    The pivot dose is withheld from the starting grid; its slot is what
    a mid-trial insertion may later fill, with truth drawn at insertion
    time via ``p_star_rule``.  Toxicity draws come before efficacy
    draws on the shared stream.
    """
    pivot, p = random_toxicity(rng, params)
    q = random_efficacy(rng, params)
    return ScenarioTruth(
        label=f"random-{params.shape}",
        doses=STRUCTURE_DOSES,
        p=p,
        q=q,
        pivot=pivot,
        p_star_rule=params,
    )


def base_grid_view(scenario: ScenarioTruth) -> tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...]]:
    """Doses and truths for the trial's starting grid.

    Random scenarios start without the pivot dose; fixed scenarios
    start with everything except the inserted dose.
    """
    skip = scenario.pivot if scenario.pivot is not None else scenario.d_star_index
    keep = [i for i in range(len(scenario.doses)) if i != skip]
    return (
        tuple(scenario.doses[i] for i in keep),
        tuple(scenario.p[i] for i in keep),
        tuple(scenario.q[i] for i in keep),
    )
