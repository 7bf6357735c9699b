"""Scoring detections against ground truth and running whole experiments."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .detect import DEFAULT_BAND as DETECT_BAND
from .detect import DEFAULT_PARTITIONS, THRESHOLD, Detection, build_partitions, detect
from .field_core import write_field
from .pipeline import Analysis, AnalysisConfig, analyze
from .synth import (
    DEFAULT_BAND as SYNTH_BAND,
    GroundTruth,
    NoiseSpec,
    Synthesis,
    SynthConfig,
    check_minutia_record,
    ladder_constellation,
    snap_types,
    synthesize,
    wrap_angle,
)


class StageError(RuntimeError):
    """A pipeline stage failed; the message starts with the stage name."""

    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


@dataclass
class MatchReport:
    fr: float
    fa: float
    n_truth: int
    n_detected: int
    pairs: list[tuple[int, int]] = field(default_factory=list)  # (detection, truth)
    loc: list[float] = field(default_factory=list)  # |dr| / T_j
    dir: list[float] = field(default_factory=list)  # |d theta|, radians
    period: list[float] = field(default_factory=list)  # |dT| / T_j
    period_signed: list[float] = field(default_factory=list)  # dT / T_j
    type_ok: list[bool] = field(default_factory=list)

    @staticmethod
    def _stat(values) -> dict:
        if not values:
            return {"mu": None, "sigma": None}
        v = np.asarray(values, dtype=float)
        return {"mu": float(v.mean()), "sigma": float(v.std())}

    @property
    def period_bias(self) -> float | None:
        return float(np.mean(self.period_signed)) if self.period_signed else None

    @property
    def type_accuracy(self) -> float | None:
        return float(np.mean(self.type_ok)) if self.type_ok else None

    def to_json(self, config: dict | None = None) -> dict:
        return {
            "fr": self.fr,
            "fa": self.fa,
            "n_truth": self.n_truth,
            "n_detected": self.n_detected,
            "stats": {
                "loc": self._stat(self.loc),
                "dir": self._stat(self.dir),
                "period": self._stat(self.period),
                "period_bias": self.period_bias,
                "type_accuracy": self.type_accuracy,
            },
            "config": config or {},
        }


def _records(doc) -> list[dict]:
    """Minutia records from a detections or ground-truth document, or a plain list."""
    if isinstance(doc, dict):
        if "minutiae" not in doc:
            raise ValueError("document has no 'minutiae' list")
        doc = doc["minutiae"]
    if not isinstance(doc, list):
        raise ValueError("minutiae must be a list")
    return [check_minutia_record(r) for r in doc]


def match(detections, truth) -> MatchReport:
    """Greedy one-to-one matching, nearest pairs first.

    A pair is admissible when the distance is at most half the ground-truth
    period.  Ties in distance are broken by the truth position ``(y, x)``,
    then by the detection position.  Error statistics cover matched pairs only.
    """
    det = _records(detections)
    tru = _records(truth)
    candidates = []
    for j, t in enumerate(tru):
        gate = 0.5 * float(t["period_px"])
        for i, d in enumerate(det):
            dist = math.hypot(float(d["x"]) - float(t["x"]), float(d["y"]) - float(t["y"]))
            if dist <= gate:
                candidates.append((dist, float(t["y"]), float(t["x"]), float(d["y"]), float(d["x"]), i, j))
    candidates.sort()
    used_d, used_t = set(), set()
    rep = MatchReport(0.0, 0.0, len(tru), len(det))
    for dist, *_, i, j in candidates:
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        d, t = det[i], tru[j]
        T = float(t["period_px"])
        rep.pairs.append((i, j))
        rep.loc.append(dist / T)
        rep.dir.append(abs(wrap_angle(float(d["direction_rad"]) - float(t["direction_rad"]))))
        dT = (float(d["period_px"]) - T) / T
        rep.period.append(abs(dT))
        rep.period_signed.append(dT)
        rep.type_ok.append(d["type"] == t["type"])
    rep.fr = 1.0 - len(used_t) / len(tru) if tru else 0.0
    rep.fa = 1.0 - len(used_d) / len(det) if det else 0.0
    return rep


@dataclass(frozen=True)
class ExperimentConfig:
    width: int = 1024
    height: int = 1024
    t_min: float = 4.0
    t_max: float = 128.0
    scales: int = 7
    per_scale: int = 10
    types: str = "alternate"
    ladder_band: tuple[float, float] = SYNTH_BAND
    noise: str = "spr:0.61"
    seed: int = 0
    partitions: int = DEFAULT_PARTITIONS
    detect_band: tuple[float, float] = DETECT_BAND
    threshold: float = THRESHOLD
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def to_json(self) -> dict:
        d = asdict(self)
        d["ladder_band"] = list(self.ladder_band)
        d["detect_band"] = list(self.detect_band)
        d["analysis"] = self.analysis.to_json()
        return d


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    synthesis: Synthesis
    analysis: Analysis
    detection: Detection
    report: MatchReport
    seconds: float

    def detections_json(self) -> dict:
        s = self.synthesis.truth
        return {
            "image": {"width": s.width, "height": s.height},
            "minutiae": [m.to_record() for m in self.detection.minutiae],
            "config": self.config.to_json(),
        }

    def report_json(self) -> dict:
        return self.report.to_json(self.config.to_json())


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # re-raised with the stage attached
        raise StageError(name, exc) from exc


def standard_synthesis(config: ExperimentConfig) -> Synthesis:
    sc = SynthConfig(config.width, config.height, config.t_min, config.t_max, config.seed)
    specs = ladder_constellation(sc, config.scales, config.per_scale, config.ladder_band, config.types)
    specs = snap_types(specs, sc)
    return synthesize(specs, sc, NoiseSpec.parse(config.noise, config.seed))


def run_experiment(config: ExperimentConfig = ExperimentConfig(), out_dir=None) -> ExperimentResult:
    """Synthesize, contaminate, analyze, detect and score; optionally save everything.

    With ``out_dir`` every intermediate field is written as PHF1, alongside
    the ground truth, the detections and the report as JSON.
    """
    t0 = time.perf_counter()
    syn = _stage("synth", standard_synthesis, config)
    ana = _stage("analyze", analyze, syn.image, config.analysis)
    parts = _stage("partition", build_partitions, config.detect_band, config.partitions)
    det = _stage(
        "detect", detect, syn.image, ana.tensor.complex, ana.freq, ana.phase, parts, config.threshold
    )
    rep = _stage(
        "match", match, [m.to_record() for m in det.minutiae], syn.truth.minutiae
    )
    result = ExperimentResult(config, syn, ana, det, rep, time.perf_counter() - t0)
    if out_dir is not None:
        _stage("write", save_experiment, result, out_dir)
    return result


def save_experiment(result: ExperimentResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    syn, ana, det = result.synthesis, result.analysis, result.detection
    write_field(out / "image.phf", syn.image)
    write_field(out / "clean.phf", syn.clean)
    write_field(out / "frequency.phf", ana.freq.as_channels())
    write_field(out / "phase.phf", np.stack([ana.phase.phase, ana.phase.magnitude], axis=-1))
    write_field(out / "gradient.phf", ana.gradient.g)
    write_field(out / "phase_tensor.phf", ana.tensor.complex)
    write_field(out / "response.phf", det.response)
    write_json(out / "truth.json", syn.truth.to_json())
    write_json(out / "detections.json", result.detections_json())
    write_json(out / "report.json", result.report_json())


def write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_truth(path) -> GroundTruth:
    return GroundTruth.load(path)
