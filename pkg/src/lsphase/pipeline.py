"""Image in, frequency field, phase, gradient and squared gradient out."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .gabor import DEFAULT_BAND, PhaseField, build_bank, ls_phase
from .gradient import GradientField, PhaseTensor, compound_gradient, direct_gradient, phase_tensor
from .ls_tensor import FrequencyField, ScaleLadder, frequency_field


@dataclass(frozen=True)
class AnalysisConfig:
    n: tuple[float, float] = (1.0, 0.0)
    band: tuple[float, float] = DEFAULT_BAND
    k_dir: int = 16
    k_freq: int = 6
    alpha: float = 0.8
    gate: float = 0.3
    gradient: str = "compound"
    sigma: float = 1.0
    gamma: float = 0.0
    # median window applied before frequency estimation; 1 disables it
    despeckle: int = 3
    ladder: ScaleLadder = field(default_factory=ScaleLadder)

    def __post_init__(self):
        if self.gradient not in ("compound", "direct"):
            raise ValueError(f"gradient must be 'compound' or 'direct', got {self.gradient!r}")
        if self.despeckle < 1 or self.despeckle % 2 == 0:
            raise ValueError("despeckle window must be a positive odd size")

    def to_json(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n)
        d["band"] = list(self.band)
        return d


@dataclass
class Analysis:
    freq: FrequencyField
    phase: PhaseField
    gradient: GradientField
    tensor: PhaseTensor


def despeckle(image: np.ndarray, size: int) -> np.ndarray:
    """Median filter that removes isolated replaced pixels."""
    if size <= 1:
        return np.asarray(image, dtype=float)
    return ndimage.median_filter(np.asarray(image, dtype=float), size=size, mode="mirror")


def analyze(image: np.ndarray, config: AnalysisConfig = AnalysisConfig()) -> Analysis:
    """Frequency field, local phase, phase gradient and its complex square.

    The frequency field is estimated on a median-filtered copy: impulsive
    noise otherwise pulls the scale peak toward small sigma.  The phase is
    taken from the unfiltered image.
    """
    image = np.asarray(image, dtype=float)
    freq = frequency_field(despeckle(image, config.despeckle), config.ladder, config.n)
    bank = build_bank(config.band, config.k_dir, config.k_freq, freq.n, config.alpha)
    pf = ls_phase(image, freq, bank, config.gate)
    if config.gradient == "compound":
        g = compound_gradient(pf.phase, freq.omega, pf.valid, freq.n, config.sigma)
    else:
        g = direct_gradient(pf.phase, pf.valid, config.sigma)
    t = phase_tensor(g, freq.omega, config.gamma)
    return Analysis(freq, pf, g, t)
