"""Run persistence and the ablation harness."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import envs
from .dqn import DIVERSE_RESET, SETTINGS, TrainConfig, metrics_csv, read_metrics_csv, train
from .network import ValueNet, forward, parse_checkpoint, save_checkpoint
from .shield import ShieldConfig, rollout_shielded

CHECKPOINT = "checkpoint.txt"
METRICS = "metrics.csv"
CONFIG = "config.txt"
MANIFEST = "manifest.json"

TABLE_METRICS = ("pi_star_return", "td_error", "m_valid", "m_cov", "pi_h_return")


class ManifestError(RuntimeError):
    pass


def git_blob_hash(data: bytes) -> str:
    """Content hash in the same form git uses for blobs."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def run_training(config: TrainConfig, out_dir, snapshots: bool = False) -> dict:
    """Train, then write config, checkpoint, metrics CSV and manifest under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    written = []

    def snapshot(net, rec):
        if snapshots:
            name = f"checkpoint_{rec.step:08d}.txt"
            save_checkpoint(net, out / name)
            written.append(name)

    result = train(config, on_eval=snapshot)
    (out / CONFIG).write_text(config.to_text())
    ckpt_text = save_checkpoint(result.net)
    (out / CHECKPOINT).write_text(ckpt_text)
    (out / METRICS).write_text(metrics_csv(result.history))
    manifest = {
        "config": config.to_text(),
        "seed": config.seed,
        "checkpoint_hash": git_blob_hash(ckpt_text.encode()),
        "files": [CONFIG, CHECKPOINT, METRICS] + written,
        "diverged": result.diverged,
        "duration_s": time.time() - t0,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def validate_run(out_dir) -> dict:
    """Check the manifest against the files on disk; returns the manifest."""
    out = Path(out_dir)
    manifest = json.loads((out / MANIFEST).read_text())
    for name in manifest["files"]:
        if not (out / name).exists():
            raise ManifestError(f"manifest lists missing file {name}")
    digest = git_blob_hash((out / CHECKPOINT).read_bytes())
    if digest != manifest["checkpoint_hash"]:
        raise ManifestError("checkpoint hash mismatch; file is corrupted or was modified")
    return manifest


def load_run(out_dir):
    """Return ``(net, history, config)`` from a validated run directory."""
    out = Path(out_dir)
    manifest = validate_run(out)
    net = parse_checkpoint((out / CHECKPOINT).read_text())
    history = read_metrics_csv((out / METRICS).read_text())
    return net, history, TrainConfig.from_text(manifest["config"])


def cached_run(config: TrainConfig, out_dir):
    """Load ``out_dir`` if it holds a valid run of exactly ``config``; train otherwise."""
    out = Path(out_dir)
    try:
        manifest = validate_run(out)
        if manifest["config"] == config.to_text():
            return load_run(out)
    except (FileNotFoundError, ManifestError, KeyError, json.JSONDecodeError):
        pass
    run_training(config, out)
    return load_run(out)


# -- shield evaluation on cart-pole -------------------------------------------

def diverse_reset(rng):
    return rng.uniform(*DIVERSE_RESET)


def cartpole_shield_eval(net: ValueNet, config: ShieldConfig, shielded: bool = True):
    return rollout_shielded(lambda x: forward(net, x)[0], config, diverse_reset,
                            envs.cartpole_step, envs.cartpole_unsafe,
                            envs.N_CARTPOLE_ACTIONS, shielded=shielded)


# -- ablation matrix -----------------------------------------------------------

def _cell(args):
    setting, seed, steps, out_dir, episodes = args
    cfg = TrainConfig.for_setting(setting, seed=seed, total_steps=steps)
    net, history, _ = cached_run(cfg, Path(out_dir) / f"{setting}-seed{seed}")
    final = history[-1]
    shield = cartpole_shield_eval(net, ShieldConfig(R=0.5 / (1 - net.gamma), episodes=episodes, seed=seed))
    return {"setting": setting, "seed": seed,
            "pi_star_return": final.return_mean, "td_error": final.td_error,
            "m_valid": final.m_valid, "m_cov": final.m_cov,
            "pi_h_return": shield.mean_return}


def run_ablation(out_dir, settings=tuple(SETTINGS), seeds=(0, 1, 2, 3, 4), steps=500_000,
                 episodes=100, workers=1) -> list[dict]:
    """Run every (setting, seed) cell and write per-run and aggregated CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(s, seed, steps, str(out), episodes) for s in settings for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_cell, jobs))
    else:
        rows = [_cell(j) for j in jobs]
    (out / "cells.csv").write_text(_rows_csv(rows, ["setting", "seed", *TABLE_METRICS]))
    (out / "table1.csv").write_text(ablation_table(rows))
    return rows


def _rows_csv(rows, cols) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def ablation_table(rows) -> str:
    """One row per setting: design flags then mean and std of each metric."""
    cols = ["setting", "bounded", "supervised", "exploration"]
    for m in TABLE_METRICS:
        cols += [f"{m}_mean", f"{m}_std"]
    out = []
    for setting in dict.fromkeys(r["setting"] for r in rows):
        flags = SETTINGS[setting]
        row = {"setting": setting.upper(),
               "bounded": "yes" if flags["arch"] == "SIGMOID" else "no",
               "supervised": "yes" if flags["supervised"] else "no",
               "exploration": "yes" if flags["explore"] else "no"}
        cell = [r for r in rows if r["setting"] == setting]
        for m in TABLE_METRICS:
            vals = np.array([r[m] for r in cell], dtype=float)
            row[f"{m}_mean"] = repr(float(vals.mean()))
            row[f"{m}_std"] = repr(float(vals.std()))
        out.append(row)
    return _rows_csv(out, cols)


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))
