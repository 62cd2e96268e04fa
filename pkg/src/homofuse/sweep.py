"""Multi-seed experiment runner: per-arm mean mAP over synthetic scenes."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import HomofuseError, UsageError
from .evaluation import total_correct_possible
from .pipeline import PipelineConfig, evaluate_match, run_match
from .synth import SceneSpec, generate_scene

CSV_HEADER = ["arm", "seed", "map", "precision_at_full", "runtime_ms"]


@dataclass
class SweepRow:
    arm: str
    seed: int
    map: float
    precision_at_full: float
    runtime_ms: float
    error: str | None = None


def parse_arm(text: str, base: PipelineConfig) -> tuple[str, PipelineConfig]:
    """``name[:key=value,key=value]`` -> (name, config derived from ``base``)."""
    name, _, rest = text.partition(":")
    if not name:
        raise UsageError(f"arm needs a name: {text!r}")
    values = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"arm setting must be key=value: {item!r}")
        values[key.strip()] = value.strip()
    return name, PipelineConfig.from_mapping({**asdict(base), **values})


def parse_seeds(text: str) -> list[int]:
    """``"0-19"``, ``"1,4,7"`` or a mix such as ``"0-3,10"``."""
    seeds: list[int] = []
    for part in filter(None, text.split(",")):
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise UsageError(f"bad seed list {text!r}") from None
    if not seeds:
        raise UsageError("need at least one seed")
    return seeds


def run_sweep(spec: SceneSpec, seeds, arms: dict[str, PipelineConfig]) -> list[SweepRow]:
    """Run every arm on every seed's scene. Failures are recorded, not raised."""
    if not seeds:
        raise UsageError("need at least one seed")
    rows = []
    for seed in seeds:
        scene = generate_scene(spec.with_seed(seed))
        totals: dict = {}
        for name, cfg in arms.items():
            crit = cfg.criterion_obj()
            t0 = time.perf_counter()
            try:
                if crit not in totals:
                    totals[crit] = total_correct_possible(
                        scene.features_p, scene.features_q, scene.ground_truth, crit)
                result = run_match(scene.features_p, scene.features_q, cfg)
                report = evaluate_match(result, scene.ground_truth, totals[crit])
                ms = 1000.0 * (time.perf_counter() - t0)
                rows.append(SweepRow(name, seed, report.map_value, report.precision_at_full, ms))
            except HomofuseError as exc:
                ms = 1000.0 * (time.perf_counter() - t0)
                rows.append(SweepRow(name, seed, math.nan, math.nan, ms, str(exc)))
    return rows


def summarize(rows: list[SweepRow]) -> list[dict]:
    arms: dict[str, list[SweepRow]] = {}
    for row in rows:
        arms.setdefault(row.arm, []).append(row)
    out = []
    for name, rs in arms.items():
        ok = np.array([r.map for r in rs if r.error is None])
        out.append({
            "arm": name,
            "mean": float(ok.mean()) if len(ok) else math.nan,
            "std": float(ok.std()) if len(ok) else math.nan,
            "runs": len(ok),
            "failed": len(rs) - len(ok),
        })
    return out


def format_table(summary: list[dict]) -> str:
    width = max([len("arm")] + [len(s["arm"]) for s in summary])
    lines = [f"{'arm':<{width}}  {'mAP':>8}  {'std':>8}  {'runs':>4}  {'failed':>6}"]
    for s in summary:
        lines.append(
            f"{s['arm']:<{width}}  {100 * s['mean']:8.2f}  {100 * s['std']:8.2f}  "
            f"{s['runs']:4d}  {s['failed']:6d}"
        )
    return "\n".join(lines) + "\n"


def write_sweep(rows: list[SweepRow], prefix, timing: bool = True) -> dict[str, Path]:
    prefix = str(prefix)
    csv_path, txt_path = Path(prefix + ".csv"), Path(prefix + ".txt")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.arm, r.seed, repr(float(r.map)), repr(float(r.precision_at_full)),
                        f"{r.runtime_ms:.3f}" if timing else "0"])
    txt_path.write_text(format_table(summarize(rows)))
    return {"csv": csv_path, "txt": txt_path}
