"""Figure-data exports from persisted run directories.

Writes three CSV series per invocation:

- pareto_counts.csv   run, generation, pareto_count
- hypervolume.csv     run, generation, dominated_hv, remaining_hv
- parallel_coords.csv run, fingerprint, params, cost, precision, recall,
                      map50, map50_95

Hypervolume is computed on the per-generation archive snapshots after the
minimization transform and min-max normalization over every valid individual
of the run (or jointly over all runs with joint_norm).  The parallel
coordinates rows are the co-dominant merge of the runs' final archives: only
individuals that stay Pareto-optimal across all supplied runs survive.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .evolution import LogCorruptError, RunLog, load_run
from .moo import ArchiveEntry, ParetoArchive, fit_normalizer, hypervolume, to_min_vector


def _individual_rows(run_dir: Path) -> list[dict]:
    rows = []
    path = run_dir / "individuals.jsonl"
    if not path.exists():
        return rows
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise LogCorruptError(f"{path}:{lineno}: {exc}") from exc
    return rows


def _vec_of(entry: dict) -> tuple:
    return to_min_vector(entry["params"], entry["cost"], entry["precision"], entry["recall"])


def export_run_metrics(
    run_dirs: list[str | Path], out_dir: str | Path, joint_norm: bool = False
) -> dict[str, Path]:
    """Write the three CSV series plus the merged front as JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs: list[tuple[str, RunLog, list[dict]]] = []
    for d in run_dirs:
        d = Path(d)
        runs.append((d.name, load_run(d), _individual_rows(d)))

    joint_bounds = None
    if joint_norm:
        all_vecs = [_vec_of(r["vector"]) for _, _, rows in runs for r in rows]
        joint_bounds = fit_normalizer(all_vecs)

    paths = {
        "pareto_counts": out / "pareto_counts.csv",
        "hypervolume": out / "hypervolume.csv",
        "parallel_coords": out / "parallel_coords.csv",
        "merged_front": out / "merged_front.json",
    }

    with paths["pareto_counts"].open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "generation", "pareto_count"])
        for name, log, _ in runs:
            for rec in log.records:
                writer.writerow([name, rec.generation, len(rec.archive)])

    with paths["hypervolume"].open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "generation", "dominated_hv", "remaining_hv"])
        for name, log, rows in runs:
            norm = joint_bounds or fit_normalizer([_vec_of(r["vector"]) for r in rows])
            for rec in log.records:
                points = norm.transform_many([_vec_of(m) for m in rec.archive])
                result = hypervolume(points)
                writer.writerow(
                    [name, rec.generation, f"{result.dominated:.10f}", f"{result.remaining:.10f}"]
                )

    merged = ParetoArchive()
    source: dict[str, tuple[str, dict]] = {}
    for name, log, _ in runs:
        if not log.records:
            continue
        for member in log.records[-1].archive:
            merged.insert(ArchiveEntry(member["fingerprint"], _vec_of(member), payload=member))
            source.setdefault(member["fingerprint"], (name, member))

    front_rows = []
    for member in merged.members:
        name, data = source[member.fingerprint]
        aux = data.get("aux", {})
        front_rows.append(
            {
                "run": name,
                "fingerprint": member.fingerprint,
                "params": data["params"],
                "cost": data["cost"],
                "precision": data["precision"],
                "recall": data["recall"],
                "map50": aux.get("map50", ""),
                "map50_95": aux.get("map50_95", ""),
            }
        )

    with paths["parallel_coords"].open("w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=[
                "run",
                "fingerprint",
                "params",
                "cost",
                "precision",
                "recall",
                "map50",
                "map50_95",
            ],
        )
        writer.writeheader()
        writer.writerows(front_rows)

    paths["merged_front"].write_text(json.dumps(front_rows, indent=2) + "\n")
    return paths
