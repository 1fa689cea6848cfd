"""Command-line entry point: ``valuebarrier {train,verify,phase,shield,oracle,ablate}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import envs
from .barrier import default_threshold, make_barrier
from .dqn import SETTINGS, ConfigError, TrainConfig
from .network import forward, load_checkpoint
from .oracle import (compute_partition, theorem_interval, value_iteration, verify_theorem1,
                     worst_case_theorem2)
from .barrier import alpha_lower_bound
from .runs import cartpole_shield_eval, run_ablation, run_training
from .shield import ShieldConfig, export_trace, summary_csv
from .verification import (VerificationConfig, barrier_metrics, phase_grid, phase_grid_csv,
                           td_error_metric)


class UsageError(Exception):
    pass


def _load_net(path):
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise RuntimeError(f"checkpoint not found: {path}") from None


def _barrier(net, R, mode):
    try:
        if mode == "auto" and net.head == "bounded" and not np.isclose(R, default_threshold(net.gamma)):
            mode = "value_minus_R"
        return make_barrier(net, mode, R)
    except ValueError as e:
        raise UsageError(f"{e} (checkpoint head={net.head})") from None


def cmd_train(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.steps is not None:
        overrides["total_steps"] = args.steps
    if args.setting:
        overrides.update(SETTINGS[args.setting])
    try:
        if args.config:
            cfg = TrainConfig.from_text(Path(args.config).read_text(), **overrides)
        else:
            cfg = TrainConfig(**overrides)
    except ConfigError as e:
        raise UsageError(f"bad config key {e}") from None
    manifest = run_training(cfg, args.out, snapshots=args.snapshots)
    print(f"wrote {', '.join(manifest['files'])} to {args.out}")
    if manifest["diverged"]:
        print("training diverged; saved the last good checkpoint", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    net = _load_net(args.checkpoint)
    h = _barrier(net, args.R, args.mode)
    spec = envs.cartpole_spec()
    conf = VerificationConfig(args.samples, args.alpha, args.seed)
    m = barrier_metrics(h, conf, spec, envs.cartpole_step, envs.N_CARTPOLE_ACTIONS)
    td = td_error_metric(lambda x: forward(net, x)[0], net.gamma, conf, spec, envs.cartpole_step)
    print(f"m_valid {m['m_valid']:.6f}")
    print(f"m_cov {m['m_cov']:.6f}")
    print(f"td_error {td:.6f}")
    if args.phase:
        _write_phase(h, args.phase, args.grid, args.out, net.gamma, args.checkpoint)
    return 0


def _write_phase(h, plane, grid, out, gamma, ckpt_id):
    rows = phase_grid(h, plane, grid, envs.cartpole_spec())
    text = phase_grid_csv(rows, plane, h.R, gamma, str(ckpt_id))
    if out:
        Path(out).write_text(text)
        print(f"wrote {len(rows)} grid rows to {out}")
    else:
        sys.stdout.write(text)


def cmd_phase(args) -> int:
    net = _load_net(args.checkpoint)
    h = _barrier(net, args.R, args.mode)
    _write_phase(h, args.plane, args.grid, args.out, net.gamma, args.checkpoint)
    return 0


def cmd_shield(args) -> int:
    net = _load_net(args.checkpoint)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    lines = []
    base = cartpole_shield_eval(net, ShieldConfig(R=args.R[0], episodes=args.episodes,
                                                  max_steps=args.max_steps, seed=args.seed),
                                shielded=False)
    lines.append(summary_csv(base, float("nan"), "unshielded"))
    print(f"unshielded: mean_length {base.mean_length:.2f} success_rate {base.success_rate:.3f}")
    for R in args.R:
        conf = ShieldConfig(R=R, episodes=args.episodes, max_steps=args.max_steps, seed=args.seed)
        res = cartpole_shield_eval(net, conf)
        print(f"R={R:g}: mean_length {res.mean_length:.2f} success_rate {res.success_rate:.3f}")
        lines.append(summary_csv(res, R, "shielded"))
        if out:
            export_trace(res.trajectories, out / f"trace_R{R:g}.csv")
    if out:
        body = lines[0] + "".join(l.split("\n", 1)[1] for l in lines[1:])
        (out / "summary.csv").write_text(body)
    return 0


def cmd_oracle(args) -> int:
    mdp = envs.parse_gridmap(Path(args.map).read_text()) if args.map else envs.default_gridworld()
    part = compute_partition(mdp)
    vals = value_iteration(mdp, args.gamma, args.tol)
    print(f"gridworld {mdp.height}x{mdp.width}, H = {part.H}")
    rep1 = verify_theorem1(mdp, vals, part, args.R, args.alpha)
    print(rep1.to_text())
    eps = args.eps
    lo, hi = theorem_interval(args.gamma, part.H, eps)
    R2 = args.R if lo < args.R < hi else 0.5 * (lo + hi)
    a2 = max(args.alpha, alpha_lower_bound(args.gamma, eps, R2))
    reps = worst_case_theorem2(mdp, vals, part, eps, R2, a2)
    n2 = sum(len(r.violations) for r in reps)
    print(f"Theorem 2: {n2} violations over {len(reps)} adversarial perturbations "
          f"(eps={eps:g}, R={R2:g}, alpha={a2:g})")
    if args.out:
        Path(args.out).write_text(rep1.to_csv())
    return 0 if rep1.ok and n2 == 0 else 1


def cmd_ablate(args) -> int:
    rows = run_ablation(args.out, args.settings, tuple(range(args.seeds)), args.steps,
                        args.episodes, args.workers)
    print(f"wrote {len(rows)} cells to {Path(args.out) / 'table1.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="valuebarrier", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a Q-network barrier on cart-pole")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--setting", choices=sorted(SETTINGS))
    t.add_argument("--steps", type=int)
    t.add_argument("--snapshots", action="store_true", help="also save a checkpoint at every evaluation")
    t.set_defaults(func=cmd_train)

    def barrier_args(q):
        q.add_argument("--checkpoint", required=True)
        q.add_argument("--R", type=float, default=50.0)
        q.add_argument("--mode", choices=("auto", "value_minus_R", "raw_logit"), default="auto")

    v = sub.add_parser("verify", help="sampled validity / coverage / TD error")
    barrier_args(v)
    v.add_argument("--samples", type=int, default=10_000)
    v.add_argument("--alpha", type=float, default=0.1)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--phase", choices=("pos-vel", "ang-angvel"))
    v.add_argument("--grid", type=int, default=101)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    ph = sub.add_parser("phase", help="export a phase-plane grid of h")
    barrier_args(ph)
    ph.add_argument("--plane", choices=("pos-vel", "ang-angvel"), required=True)
    ph.add_argument("--grid", type=int, default=101)
    ph.add_argument("--out")
    ph.set_defaults(func=cmd_phase)

    s = sub.add_parser("shield", help="roll out the shielded random policy")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--R", type=float, nargs="+", default=[50.0])
    s.add_argument("--episodes", type=int, default=100)
    s.add_argument("--max-steps", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_shield)

    o = sub.add_parser("oracle", help="exact theorem checks on a gridworld")
    o.add_argument("--gamma", type=float, default=0.99)
    o.add_argument("--map")
    o.add_argument("--R", type=float, default=50.0)
    o.add_argument("--alpha", type=float, default=0.1)
    o.add_argument("--eps", type=float, default=1.0)
    o.add_argument("--tol", type=float, default=1e-9)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    a = sub.add_parser("ablate", help="train the settings x seeds matrix")
    a.add_argument("--out", required=True)
    a.add_argument("--settings", nargs="+", choices=list(SETTINGS), default=list(SETTINGS))
    a.add_argument("--seeds", type=int, default=5)
    a.add_argument("--steps", type=int, default=500_000)
    a.add_argument("--episodes", type=int, default=100)
    a.add_argument("--workers", type=int, default=1)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (RuntimeError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
