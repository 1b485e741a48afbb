"""Figure rendering for CLI reports (matplotlib, Agg backend, PNG output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# no software/date stamps so reruns produce identical files
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def noise_curve(points, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = [p.sigma for p in points]
    y = [p.mean for p in points]
    ax.fill_between(x, [p.ci_low for p in points], [p.ci_high for p in points], alpha=0.25)
    ax.plot(x, y, "o-")
    ax.set_xlabel("detection noise std [m]")
    ax.set_ylabel("mean planning sensitivity")
    _save(fig, path)


def pr_curves(curves: dict, path):
    """``curves`` maps a label to ``(recall, precision)`` arrays."""
    fig, ax = plt.subplots(figsize=(4.5, 4))
    for label, (r, p) in curves.items():
        ax.step(r, p, where="post", label=label)
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.legend(loc="lower left")
    _save(fig, path)


def striation(buckets: dict, path):
    """Bar chart of per-bucket means with 95% intervals, one panel per metric."""
    names = list(buckets)
    fig, axes = plt.subplots(1, max(len(names), 1), figsize=(3.2 * max(len(names), 1), 3),
                             squeeze=False)
    for ax, name in zip(axes[0], names):
        bs = buckets[name]
        xs = range(len(bs))
        means = [b.mean if b.mean is not None else 0.0 for b in bs]
        err = [(b.mean - b.ci_low) if b.mean is not None else 0.0 for b in bs]
        ax.bar(xs, means, yerr=err, capsize=3)
        ax.set_xticks(list(xs), [f"{b.lo:.2g}-{b.hi:.2g}" for b in bs], rotation=30, fontsize=7)
        ax.set_title(name)
        ax.set_xlabel("sensitivity bucket")
    _save(fig, path)


def reopt_trajectories(scene, results: dict, path):
    """Ground-truth ego path against reoptimized paths, with lanes and agents."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for lane in scene.lanes:
        ax.plot(*lane.centerline.T, color="0.8", lw=6, zorder=0)
    for aid, traj in scene.agents.items():
        ax.plot(*traj.positions.T, ":", color="0.4", lw=1)
    ax.plot(*scene.ego.positions.T, "k-", lw=2, label="ground truth")
    for label, res in results.items():
        ax.plot(*res.trajectory.positions.T, "--", label=label)
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(fontsize=7)
    _save(fig, path)
