"""Figure rendering for the CLI report path.

Every renderer writes a PNG next to the delimited output it illustrates.
The Date metadata is stripped so repeated runs produce identical bytes.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 150, "metadata": {"Date": None}}


def _finish(fig, path):
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def voltage_profile(op, path):
    """Bar chart of voltage magnitudes and phase angles at an operating point."""
    n = op.n_nodes
    ids = np.arange(1, n + 1)
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax1.bar(ids, op.V, color="tab:blue")
    ax1.set_ylabel("V (p.u.)")
    ax1.set_ylim(0, max(1.2, op.V.max() * 1.05))
    ax2.bar(ids, np.degrees(op.phi), color="tab:orange")
    ax2.set_ylabel("phase (deg)")
    ax2.set_xlabel("bus")
    ax2.set_xticks(ids)
    fig.suptitle("Operating point")
    fig.tight_layout()
    return _finish(fig, path)


def certificate_margins(report, path):
    """Per-node droop margins and worst accretivity slacks, colored by verdict."""
    nodes = [nr.node + 1 for nr in report.per_node]
    alpha_margin = [(nr.alpha_value - nr.alpha_theory)
                    if nr.alpha_theory is not None else np.nan
                    for nr in report.per_node]
    slack = [nr.worst_slack for nr in report.per_node]
    ok_colors = ["tab:green" if (nr.alpha_ok is True) else "tab:red"
                 for nr in report.per_node]
    acc_colors = ["tab:green" if nr.accretive else "tab:red"
                  for nr in report.per_node]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax1.bar(nodes, alpha_margin, color=ok_colors)
    ax1.axhline(0.0, color="k", lw=0.8)
    ax1.set_ylabel("droop margin")
    ax2.bar(nodes, slack, color=acc_colors)
    ax2.axhline(0.0, color="k", lw=0.8)
    ax2.set_ylabel("worst accretivity slack")
    ax2.set_xlabel("bus")
    ax2.set_xticks(nodes)
    fig.suptitle(f"Certificate: {report.verdict}")
    fig.tight_layout()
    return _finish(fig, path)


def alpha_sweep_scatter(rows, path):
    """Critical vs theoretical droop ratios with the identity line."""
    ok = [(r["alpha_theory"], r["alpha_crit"]) for r in rows if r["status"] == "ok"]
    fig, ax = plt.subplots(figsize=(5.5, 5))
    if ok:
        theory, crit = zip(*ok)
        lo = min(min(theory), min(crit))
        hi = max(max(theory), max(crit))
        pad = 0.1 * max(hi - lo, 1e-3)
        grid = np.linspace(lo - pad, hi + pad, 2)
        ax.plot(grid, grid, "k--", lw=0.8, label="crit = theory")
        ax.scatter(theory, crit, color="tab:blue", zorder=3)
        ax.legend(loc="best")
    ax.set_xlabel("droop bound (theory)")
    ax.set_ylabel("critical droop (bisection)")
    ax.set_title("Droop-bound tightness")
    fig.tight_layout()
    return _finish(fig, path)


def trajectory_panels(traj, path):
    """Voltage magnitudes and centered phase angles over time."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    for n in range(traj.V.shape[1]):
        ax1.plot(traj.times, traj.V[:, n], lw=0.8)
    ax1.set_ylabel("V (p.u.)")
    centered = traj.phi - traj.phi.mean(axis=1, keepdims=True)
    for n in range(traj.phi.shape[1]):
        ax2.plot(traj.times, centered[:, n], lw=0.8)
    ax2.set_ylabel("phase - mean (rad)")
    ax2.set_xlabel("t (s)")
    title = "Trajectory"
    if traj.collapsed:
        title += f" (voltage collapse at t = {traj.collapse_time:.3g} s)"
    fig.suptitle(title)
    fig.tight_layout()
    return _finish(fig, path)


def cross_scan_map(records, path):
    """Oracle verdicts as dots over the certified region shading."""
    cvp = sorted({r["c_vp"] for r in records})
    cwq = sorted({r["c_wq"] for r in records})
    cert = np.zeros((len(cwq), len(cvp)))
    iv = {v: i for i, v in enumerate(cvp)}
    jw = {v: j for j, v in enumerate(cwq)}
    fig, ax = plt.subplots(figsize=(6, 5.5))
    for r in records:
        cert[jw[r["c_wq"]], iv[r["c_vp"]]] = 1.0 if (
            r["certificate_verdict"] == "certified_stable") else 0.0
    ax.pcolormesh(cvp, cwq, cert, shading="nearest", cmap="Greens",
                  vmin=0, vmax=2.5)
    stable = [(r["c_vp"], r["c_wq"]) for r in records
              if r["oracle_verdict"] == "stable"]
    other = [(r["c_vp"], r["c_wq"]) for r in records
             if r["oracle_verdict"] != "stable"]
    if stable:
        xs, ys = zip(*stable)
        ax.scatter(xs, ys, s=8, color="tab:green", label="oracle stable")
    if other:
        xs, ys = zip(*other)
        ax.scatter(xs, ys, s=8, color="k", label="oracle not stable")
    ax.set_xlabel("voltage/active cross gain")
    ax.set_ylabel("frequency/reactive cross gain")
    ax.set_title("Cross-coupling scan (shaded: certified)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _finish(fig, path)
