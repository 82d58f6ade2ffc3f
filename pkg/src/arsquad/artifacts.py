"""Run artifacts: JSON configs and policies, CSV logs and SVG plots."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, fields, replace
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from arsquad import ars
from arsquad.dynamics import PlantParams
from arsquad.task import TaskConfig, TaskKind
from arsquad.trainer import (
    RUNNING_AVG_WINDOW,
    ArsHyperparams,
    EpisodeTrace,
    RunConfig,
    TrainResult,
)

REWARDS_COLUMNS = ["iteration", "eval_episode", "total_reward", "running_avg_10", "sigma_R", "update_norm"]
TRACE_COLUMNS = [
    "time", "x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi",
    "p", "q", "r", "s1", "s2", "s3", "s4", "reward",
]
TRAIN_LOG_COLUMNS = ["iteration", "direction", "offset", "reward_plus", "reward_minus"]
SUMMARY_COLUMNS = ["seed", "final_eval_reward", "best_eval_reward"]


class SchemaError(ValueError):
    """CSV or JSON input that does not match the expected layout."""


def fmt(value: float) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(value))


# -- configuration ------------------------------------------------------------

# execution settings, excluded from config.json so it captures only what
# determines the results
_EXECUTION_FIELDS = ("out_dir", "workers")


def config_to_dict(config: RunConfig) -> dict:
    data = {
        f.name: getattr(config, f.name)
        for f in fields(config)
        if f.name not in _EXECUTION_FIELDS
    }
    data["hyperparams"] = asdict(config.hyperparams)
    task = asdict(config.task)
    task["task_kind"] = config.task.task_kind.value
    for key in ("init_position", "init_velocity", "init_euler", "init_body_rates", "target"):
        task[key] = list(task[key])
    data["task"] = task
    plant = asdict(config.plant)
    plant["inertia_diag"] = list(plant["inertia_diag"])
    data["plant"] = plant
    return data


def _build(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise SchemaError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict, base: RunConfig | None = None) -> RunConfig:
    """Overlay ``data`` onto ``base`` (defaults when omitted)."""
    base = base or RunConfig()
    data = dict(data)
    for key in _EXECUTION_FIELDS:
        data.pop(key, None)
    nested = {}
    for key, cls in (("hyperparams", ArsHyperparams), ("task", TaskConfig), ("plant", PlantParams)):
        if key in data:
            merged = {**asdict(getattr(base, key)), **data.pop(key)}
            if key == "task":
                merged["task_kind"] = TaskKind(merged["task_kind"])
            nested[key] = _build(cls, merged, key)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise SchemaError(f"config: unknown keys {sorted(unknown)}")
    return replace(base, **data, **nested)


def save_config(config: RunConfig, path: Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2) + "\n", encoding="utf-8")


def load_config(path: Path, base: RunConfig | None = None) -> RunConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    return config_from_dict(data, base)


# -- policy file --------------------------------------------------------------


def policy_to_dict(M: np.ndarray, stats: ars.NormalizerStats) -> dict:
    return {
        "shape": list(M.shape),
        "M": M.ravel().tolist(),
        "mean": stats.mean.tolist(),
        "var": stats.variance.tolist(),
        "m2": stats.m2.tolist(),
        "count": int(stats.count),
    }


def save_policy(M: np.ndarray, stats: ars.NormalizerStats, path: Path) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(M, stats), indent=2) + "\n", encoding="utf-8")


def load_policy(path: Path) -> tuple[np.ndarray, ars.NormalizerStats]:
    """Read a policy file; ``m2`` is optional and rebuilt from ``var`` when absent."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        rows, cols = (int(v) for v in data["shape"])
        M = np.array(data["M"], dtype=np.float64).reshape(rows, cols)
        mean = np.array(data["mean"], dtype=np.float64).reshape(cols)
        count = int(data["count"])
        if "m2" in data:
            m2 = np.array(data["m2"], dtype=np.float64).reshape(cols)
        else:
            m2 = np.array(data["var"], dtype=np.float64).reshape(cols) * count
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed policy file ({exc})") from exc
    if count < 0 or not (np.all(np.isfinite(M)) and np.all(np.isfinite(mean)) and np.all(m2 >= 0)):
        raise SchemaError(f"{path}: policy values out of range")
    return M, ars.NormalizerStats(count, mean, m2)


# -- CSV ----------------------------------------------------------------------


def running_average(values, window: int = RUNNING_AVG_WINDOW) -> list[float]:
    out = []
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1) : i + 1]
        out.append(math.fsum(chunk) / len(chunk))
    return out


def rewards_rows(result: TrainResult) -> list[list]:
    evaluated = [r for r in result.records if r.eval_reward is not None]
    averages = running_average([r.eval_reward for r in evaluated])
    return [
        [r.iteration, i, r.eval_reward, avg, r.sigma_r, r.update_norm]
        for i, (r, avg) in enumerate(zip(evaluated, averages))
    ]


def trace_rows(trace: EpisodeTrace) -> list[list[float]]:
    return [
        [t, *y, *s, r]
        for t, y, s, r in zip(trace.times, trace.states, trace.commands, trace.rewards)
    ]


def write_csv(path: Path, columns: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([v if isinstance(v, (int, str)) and not isinstance(v, bool) else fmt(v) for v in row])


def read_csv(path: Path, columns: list[str]) -> dict[str, list[float]]:
    """Parse a CSV written by :func:`write_csv`, checking the header exactly."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file")
        for i, name in enumerate(columns):
            if i >= len(header) or header[i] != name:
                got = header[i] if i < len(header) else "<missing>"
                raise SchemaError(f"{path}: column {i} should be '{name}', found '{got}'")
        if len(header) != len(columns):
            raise SchemaError(f"{path}: unexpected column '{header[len(columns)]}'")
        data: dict[str, list[float]] = {name: [] for name in columns}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(columns):
                raise SchemaError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
            for name, value in zip(columns, row):
                try:
                    data[name].append(float(value))
                except ValueError:
                    raise SchemaError(f"{path}:{lineno}: column '{name}' is not numeric") from None
    return data


def write_trace(trace: EpisodeTrace | None, path: Path) -> None:
    write_csv(path, TRACE_COLUMNS, trace_rows(trace) if trace is not None else [])


def write_run_artifacts(config: RunConfig, result: TrainResult, table: ars.NoiseTable | None) -> None:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(config, out / "config.json")
    write_csv(out / "rewards.csv", REWARDS_COLUMNS, rewards_rows(result))
    write_csv(
        out / "train_log.csv",
        TRAIN_LOG_COLUMNS,
        (
            [r.iteration, k, off, rp, rm]
            for r in result.records
            for k, (off, rp, rm) in enumerate(zip(r.offsets, r.rewards_plus, r.rewards_minus))
        ),
    )
    write_trace(result.best_trace, out / "best_trace.csv")
    save_policy(result.policy, result.stats, out / "final_policy.json")
    if config.save_noise and table is not None:
        table.save(out / "noise.bin")


def write_sweep_summary(path: Path, results: dict[int, TrainResult]) -> None:
    rows = []
    for seed, result in results.items():
        evals = [r.eval_reward for r in result.records if r.eval_reward is not None]
        final = evals[-1] if evals else float("nan")
        best = max(evals) if evals else float("nan")
        rows.append([seed, final, best])
    write_csv(path, SUMMARY_COLUMNS, rows)


# -- SVG ----------------------------------------------------------------------

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"]


class _Panel:
    """Axis-aligned plot area mapping data coordinates to SVG pixels."""

    def __init__(self, x0, y0, width, height, xs, ys_list, title, xlabel):
        self.x0, self.y0, self.w, self.h = x0, y0, width, height
        self.title, self.xlabel = title, xlabel
        xs = np.asarray(xs, dtype=float)
        ys = np.concatenate([np.asarray(y, dtype=float) for y in ys_list])
        self.xmin, self.xmax = _padded_range(xs, pad=0.0)
        self.ymin, self.ymax = _padded_range(ys, pad=0.05)

    def px(self, x):
        return self.x0 + (x - self.xmin) / (self.xmax - self.xmin) * self.w

    def py(self, y):
        return self.y0 + self.h - (y - self.ymin) / (self.ymax - self.ymin) * self.h

    def frame(self) -> list[str]:
        x1, y1 = self.x0 + self.w, self.y0 + self.h
        return [
            f'<rect x="{self.x0}" y="{self.y0}" width="{self.w}" height="{self.h}" '
            'fill="none" stroke="#444" stroke-width="1"/>',
            f'<text x="{self.x0 + self.w / 2}" y="{self.y0 - 8}" text-anchor="middle" '
            f'font-size="13">{escape(self.title)}</text>',
            f'<text x="{self.x0 + self.w / 2}" y="{y1 + 30}" text-anchor="middle" '
            f'font-size="11">{escape(self.xlabel)}</text>',
            f'<text x="{self.x0 - 4}" y="{self.y0 + 4}" text-anchor="end" font-size="10">{self.ymax:.4g}</text>',
            f'<text x="{self.x0 - 4}" y="{y1}" text-anchor="end" font-size="10">{self.ymin:.4g}</text>',
            f'<text x="{self.x0}" y="{y1 + 14}" text-anchor="start" font-size="10">{self.xmin:.4g}</text>',
            f'<text x="{x1}" y="{y1 + 14}" text-anchor="end" font-size="10">{self.xmax:.4g}</text>',
        ]

    def polyline(self, xs, ys, color, label) -> str:
        pts = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        return (
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}">'
            f"<title>{escape(label)}</title></polyline>"
        )

    def legend(self, labels, colors) -> list[str]:
        out = []
        for i, (label, color) in enumerate(zip(labels, colors)):
            y = self.y0 + 14 + 14 * i
            out.append(
                f'<text x="{self.x0 + self.w - 6}" y="{y}" text-anchor="end" font-size="10" '
                f'fill="{color}">{escape(label)}</text>'
            )
        return out


def _padded_range(values: np.ndarray, pad: float) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo
    if span <= 1e-12 * max(1.0, abs(lo), abs(hi)):
        return lo - 1.0, hi + 1.0
    return lo - pad * span, hi + pad * span


def _svg(width: int, height: int, body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">'
    )
    return "\n".join(
        [
            '<?xml version="1.0" encoding="UTF-8"?>',
            head,
            f"<title>{escape(title)}</title>",
            f'<rect width="{width}" height="{height}" fill="white"/>',
            *body,
            "</svg>",
            "",
        ]
    )


def _require_rows(data: dict[str, list[float]], path) -> None:
    if not next(iter(data.values())):
        raise SchemaError(f"{path}: no data rows")


def rewards_svg(path: Path) -> str:
    """Total evaluation reward and its 10-episode running average per episode."""
    data = read_csv(path, REWARDS_COLUMNS)
    _require_rows(data, path)
    xs, total, avg = data["eval_episode"], data["total_reward"], data["running_avg_10"]
    panel = _Panel(80, 40, 640, 320, xs, [total, avg], "Reward per evaluation episode", "episode")
    body = panel.frame()
    body.append(panel.polyline(xs, total, PALETTE[0], "total reward"))
    body.append(panel.polyline(xs, avg, PALETTE[1], "running average (10)"))
    body += panel.legend(["total reward", "running average (10)"], PALETTE[:2])
    return _svg(760, 420, body, "rewards")


def motion_svg(path: Path) -> str:
    """Four panels: position, velocity, Euler angles and rotor speeds over time."""
    data = read_csv(path, TRACE_COLUMNS)
    _require_rows(data, path)
    t = data["time"]
    groups = [
        ("Position (m)", ["x", "y", "z"]),
        ("Velocity (m/s)", ["vx", "vy", "vz"]),
        ("Euler angles (rad)", ["phi", "theta", "psi"]),
        ("Rotor speeds (rev/s)", ["s1", "s2", "s3", "s4"]),
    ]
    body = []
    for i, (title, cols) in enumerate(groups):
        x0, y0 = 80 + (i % 2) * 440, 40 + (i // 2) * 300
        panel = _Panel(x0, y0, 360, 220, t, [data[c] for c in cols], title, "time (s)")
        body += panel.frame()
        for j, c in enumerate(cols):
            body.append(panel.polyline(t, data[c], PALETTE[j], c))
        body += panel.legend(cols, PALETTE)
    return _svg(900, 620, body, "motion summary")


def trajectory_svg(path: Path) -> str:
    """Flight path as an x-y projection and altitude over time."""
    data = read_csv(path, TRACE_COLUMNS)
    _require_rows(data, path)
    xy = _Panel(80, 40, 360, 360, data["x"], [data["y"]], "Ground track (y vs x)", "x (m)")
    tz = _Panel(520, 40, 360, 360, data["time"], [data["z"]], "Altitude (z vs t)", "time (s)")
    body = xy.frame() + tz.frame()
    body.append(xy.polyline(data["x"], data["y"], PALETTE[0], "x-y"))
    body.append(tz.polyline(data["time"], data["z"], PALETTE[2], "z"))
    return _svg(920, 460, body, "trajectory")


PLOTTERS = {"rewards": rewards_svg, "motion": motion_svg, "trajectory": trajectory_svg}
