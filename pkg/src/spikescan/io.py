"""File formats: spike-train text/JSON, model JSON, kernel specs.

Text spike trains: a header line ``# horizon t0 t1 d`` followed by
exactly ``d`` lines, one train per line, ascending times separated by
single spaces; a blank line is an empty train.  Floats are written with
``repr`` so files round-trip bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
from typing import Optional

import numpy as np

from .errors import ConfigError
from .intensity_model import IntensityPair
from .kernel import ScoreFunction
from .point_process import MultiTrain, SpikeTrain

ARTIFACT_VERSION = "0.1.0"


def dump_trains_text(recording: MultiTrain) -> str:
    t0, t1 = recording.horizon
    lines = [f"# horizon {t0!r} {t1!r} {recording.dimension}"]
    for tr in recording.trains:
        lines.append(" ".join(repr(float(x)) for x in tr.times))
    return "\n".join(lines) + "\n"


def parse_trains_text(text: str) -> MultiTrain:
    lines = text.splitlines()
    header = None
    body_start = 0
    for k, line in enumerate(lines):
        if line.startswith("#"):
            parts = line.split()
            if len(parts) == 5 and parts[1] == "horizon":
                header = parts
            body_start = k + 1
        else:
            break
    if header is None:
        raise ConfigError("missing '# horizon t0 t1 d' header")
    t0, t1, d = float(header[2]), float(header[3]), int(header[4])
    body = lines[body_start:]
    if len(body) < d:
        raise ConfigError(f"expected {d} train lines, found {len(body)}")
    trains = []
    for k in range(d):
        times = np.array([float(p) for p in body[k].split()])
        trains.append(SpikeTrain(times, (t0, t1)))
    return MultiTrain(trains)


def write_trains_text(recording: MultiTrain, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_trains_text(recording))


def read_trains_text(path) -> MultiTrain:
    with open(path) as fh:
        return parse_trains_text(fh.read())


def trains_to_json(recording: MultiTrain) -> dict:
    d = {"horizon": list(recording.horizon),
         "trains": [[float(x) for x in tr.times] for tr in recording.trains]}
    if recording.rates is not None:
        d["rates"] = [float(r) for r in recording.rates]
    return d


def trains_from_json(d: dict) -> MultiTrain:
    t0, t1 = d["horizon"]
    trains = [SpikeTrain(np.asarray(ts, float), (t0, t1)) for ts in d["trains"]]
    return MultiTrain(trains, rates=d.get("rates"))


def write_trains_json(recording: MultiTrain, path) -> None:
    with open(path, "w") as fh:
        json.dump(trains_to_json(recording), fh, indent=1)
        fh.write("\n")


def read_trains_json(path) -> MultiTrain:
    with open(path) as fh:
        return trains_from_json(json.load(fh))


def write_model_json(model: IntensityPair, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def read_model_json(path) -> IntensityPair:
    with open(path) as fh:
        return IntensityPair.from_dict(json.load(fh))


def kernel_from_spec(spec: dict) -> ScoreFunction:
    """Build a score function from a config record.

    ``{"kind": "hamming"|"box", "epsilon_ms": ..., "beta": ..., "span": ...}``
    For box kernels pass ``beta`` as a string (exact rational) or also
    declare ``span``; bare float betas have no exact lattice.
    """
    kind = spec.get("kind")
    eps = spec.get("epsilon_ms")
    beta = spec.get("beta")
    if kind == "hamming":
        return ScoreFunction.hamming(eps, float(beta))
    if kind == "box":
        return ScoreFunction.box(eps, beta, span=spec.get("span"))
    raise ConfigError(f"unknown kernel kind {kind!r}")


def write_series_csv(series, path) -> None:
    """Score series as ``t, score`` rows (breakpoints or grid times)."""
    lines = ["t,score"]
    for t, v in zip(series.times, series.values):
        lines.append(f"{t!r},{v!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def match_report_to_json(report) -> dict:
    return {"max_score": report.max_score,
            "detection_time": (None if report.detection_time == float("inf")
                               else report.detection_time),
            "onsets": [float(x) for x in report.onsets],
            "matches": report.matches,
            "refractory": report.refractory}


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance(config: dict, seed: Optional[int]) -> dict:
    return {"artifact_version": ARTIFACT_VERSION, "seed": seed,
            "config_hash": config_hash(config), "config": config}
