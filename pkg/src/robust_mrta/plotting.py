"""Static figures of a run: energy and specialization against time."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .simulator import RunLog  # noqa: E402

LABELS = {"nominal": "baseline (CBF)", "robust": "proposed (RCBF)"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_energy(logs: list[RunLog], path: str) -> str:
    """Sum of squared task energies over time, one curve per log."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for lg in logs:
        ax.plot(lg.times, lg.energy, label=LABELS.get(lg.mode, lg.mode))
    ax.set_xlabel("time [s]")
    ax.set_ylabel(r"$\sum_i J_i^2$ [m$^4$]")
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def plot_specialization(logs: list[RunLog], robot: int, path: str) -> str:
    """Specialization of ``robot`` towards whichever task it is assigned."""
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for lg in logs:
        ax.plot(lg.times, lg.assigned_specialization(robot), label=LABELS.get(lg.mode, lg.mode))
    ax.set_xlabel("time [s]")
    ax.set_ylabel(f"$s$ of robot {robot} (assigned task)")
    ax.set_ylim(-0.05, 1.05)
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def render(logs: list[RunLog], out_dir: str, robot: int = 0, fmt: str = "svg") -> list[str]:
    logs = [lg for lg in logs if len(lg)]
    if not logs:
        return []
    os.makedirs(out_dir, exist_ok=True)
    return [
        plot_energy(logs, os.path.join(out_dir, f"energy.{fmt}")),
        plot_specialization(logs, robot, os.path.join(out_dir, f"specialization.{fmt}")),
    ]
