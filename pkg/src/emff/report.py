"""PNG figures rendered from telemetry frames (post hoc, headless)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .mathkit import mrp_to_dcm_stack  # noqa: E402


def _series(frames, name):
    return np.stack([np.asarray(getattr(f, name), dtype=float) for f in frames])


def _rw_share(frames, m):
    """Per-frame body-frame share ``C_BI L / m`` for the wheel satellites, shape (k, m, 3)."""
    out = []
    for f in frames:
        c = mrp_to_dcm_stack(f.sigma[:m])
        out.append(np.einsum("jba,b->ja", c, f.L) / m)
    return np.stack(out)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_tracking(frames, r_targets, sigma_targets, path):
    t = _series(frames, "t")
    r = _series(frames, "r")
    sig = _series(frames, "sigma")
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    pos_err = np.linalg.norm(r - r_targets[None], axis=2)
    att_err = np.linalg.norm(sig - sigma_targets[None], axis=2)
    for j in range(r.shape[1]):
        a1.semilogy(t, np.maximum(pos_err[:, j], 1e-16), label=f"sat {j + 1}")
        a2.semilogy(t, np.maximum(att_err[:, j], 1e-16), label=f"sat {j + 1}")
    a1.set_ylabel("|r_j - r_jd| [m]")
    a2.set_ylabel("|sigma_j - sigma_jd| [-]")
    a2.set_xlabel("t [s]")
    a1.legend(fontsize=7, ncol=3)
    a1.grid(True, which="both", alpha=0.3)
    a2.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_wheels(frames, m, path):
    """Wheel momenta against the uniform share ``L/m`` (body components)."""
    t = _series(frames, "t")
    h = _series(frames, "h")[:, :m]
    share = _rw_share(frames, m)
    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    for w, ax in enumerate(axes):
        for j in range(m):
            ax.plot(t, h[:, j, w], label=f"h{j + 1}")
        ax.plot(t, share[:, 0, w], "k--", lw=1, label="L/m (sat 1 body)")
        ax.set_ylabel(f"{'xyz'[w]} [N m s]")
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize=7, ncol=4)
    axes[-1].set_xlabel("t [s]")
    return _save(fig, path)


def plot_momentum_and_dipoles(frames, path):
    t = _series(frames, "t")
    big_l = _series(frames, "L")
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    a1.plot(t, np.linalg.norm(big_l, axis=1), "k", label="|L|")
    for w in range(3):
        a1.plot(t, big_l[:, w], lw=0.8, label=f"L_{'xyz'[w]}")
    a1.set_ylabel("[N m s]")
    a1.legend(fontsize=7, ncol=4)
    a1.grid(True, alpha=0.3)
    for name in ("mu_sin", "mu_cos", "mu_dc"):
        mu = np.linalg.norm(_series(frames, name), axis=2).max(axis=1)
        if np.any(mu > 0.0):
            a2.plot(t, mu, label=f"max_j |{name}|")
    a2.set_ylabel("[A m^2]")
    a2.set_xlabel("t [s]")
    a2.legend(fontsize=7)
    a2.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_lyapunov(frames, path):
    t = _series(frames, "t")
    v = _series(frames, "lyapunov_V")
    if not np.any(np.isfinite(v)):
        return None
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.semilogy(t, np.maximum(v, 1e-300))
    ax.set_xlabel("t [s]")
    ax.set_ylabel("V [J]")
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def render_report(frames, cfg, out_dir):
    """Write all figures for a run into ``out_dir``; returns the list of paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not frames:
        return []
    configs = cfg.satellite_configs()
    targets = cfg.target_set()
    paths = [
        plot_tracking(frames, targets.all_positions(configs), targets.sigma_d, out / "tracking.png"),
        plot_wheels(frames, cfg.m, out / "wheels.png"),
        plot_momentum_and_dipoles(frames, out / "momentum_dipoles.png"),
        plot_lyapunov(frames, out / "lyapunov.png"),
    ]
    return [p for p in paths if p is not None]
