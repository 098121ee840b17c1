"""Figure rendering for the CLI report paths.

Every reporting subcommand writes delimited data first; these helpers render
the companion PNGs next to it.  Only the CLI imports this module, keeping
matplotlib out of the numerical core.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_tci_convergence(history: list[dict], path) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    sweeps = [h["sweep"] for h in history]
    ax.semilogy(sweeps, [max(h["eps_r"], 1e-17) for h in history], "o-", label=r"$\epsilon_r$")
    ax2 = ax.twinx()
    ax2.plot(sweeps, [h["max_chi"] for h in history], "s--", color="tab:orange", label=r"$\chi$")
    ax.set_xlabel("sweep")
    ax.set_ylabel("relative error")
    ax2.set_ylabel("max bond dimension")
    ax.legend(loc="upper right")
    return _save(fig, path)


def plot_iqsp_trace(steps: list[dict], path) -> str:
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    lams = [s["lam"] for s in steps]
    axes[0].semilogy(lams, [max(s["final_infidelity"], 1e-17) for s in steps], "o-")
    axes[0].set_xlabel(r"$\lambda$")
    axes[0].set_ylabel("final infidelity")
    grads = [(s["lam"], s["initial_avg_grad"]) for s in steps if s["initial_avg_grad"]]
    if grads:
        axes[1].semilogy(*zip(*grads), "s-", color="tab:green")
    axes[1].set_xlabel(r"$\lambda$")
    axes[1].set_ylabel("initial avg. gradient")
    return _save(fig, path)


def plot_grad_scan(rows: list[dict], path) -> str:
    fig, axes = plt.subplots(2, 1, figsize=(5.5, 6.4))
    modes = sorted({r["mode"] for r in rows})
    colors = {m: c for m, c in zip(modes, ("tab:blue", "tab:red", "tab:green"))}
    for m in modes:
        sub = [r for r in rows if r["mode"] == m]
        axes[0].loglog([max(r["overlap"], 1e-17) for r in sub],
                       [max(r["avg_grad"], 1e-17) for r in sub],
                       ".", alpha=0.5, color=colors[m], label=m)
        ns = sorted({r["n"] for r in sub})
        meds, los, his = [], [], []
        for n in ns:
            g = np.array([r["avg_grad"] for r in sub if r["n"] == n])
            meds.append(g.mean())
            los.append(g.min())
            his.append(g.max())
        axes[1].errorbar(ns, meds,
                         yerr=[np.array(meds) - np.array(los), np.array(his) - np.array(meds)],
                         fmt="o-", capsize=3, color=colors[m], label=m)
    axes[0].set_xlabel("initial overlap")
    axes[0].set_ylabel("avg. gradient magnitude")
    axes[0].legend()
    axes[1].set_yscale("log")
    axes[1].set_xlabel("qubit count n")
    axes[1].set_ylabel("avg. gradient magnitude")
    axes[1].legend()
    return _save(fig, path)


def plot_baseline(rows: list[dict], path) -> str:
    families = sorted({r["family"] for r in rows})
    fig, axes = plt.subplots(len(families), 1, figsize=(5, 3.2 * len(families)),
                             squeeze=False)
    for ax, fam in zip(axes[:, 0], families):
        sub = sorted((r for r in rows if r["family"] == fam), key=lambda r: r["two_qubit_gates"])
        ax.semilogy([r["two_qubit_gates"] for r in sub],
                    [max(r["eps_max"], 1e-17) for r in sub], "o-")
        for r in sub:
            ax.annotate(f"L={r['layers']}", (r["two_qubit_gates"], r["eps_max"]),
                        textcoords="offset points", xytext=(4, 4), fontsize=8)
        ax.set_xlabel("two-qubit gate count")
        ax.set_ylabel(r"$\epsilon_{\max}$")
        ax.set_title(fam)
    return _save(fig, path)


def plot_covariance(report: dict, path) -> str:
    cov = np.asarray(report["covariance"])
    exact = np.asarray(report["exact_covariance"])
    err = np.asarray(report["covariance_error_2sigma"])
    d = cov.shape[0]
    idx = [(i, j) for i in range(d) for j in range(i, d)]
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    x = np.arange(len(idx))
    ax.errorbar(x, [cov[i, j] for i, j in idx], yerr=[err[i, j] for i, j in idx],
                fmt="o", capsize=3, label="sampled")
    ax.plot(x, [exact[i, j] for i, j in idx], "x", color="tab:red", label="exact")
    ax.set_xticks(x)
    ax.set_xticklabels([f"({i + 1},{j + 1})" for i, j in idx])
    ax.set_xlabel("covariance entry")
    ax.set_ylabel("value")
    ax.legend()
    return _save(fig, path)


def plot_cci_trace(trace: list[dict], path) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.4))
    its = [t["iteration"] for t in trace]
    ax.semilogy(its, [max(t["cost"], 1e-17) for t in trace], "o-", label="pivot cost")
    ax.semilogy(its, [max(t["infidelity"], 1e-17) for t in trace], "s--", label="infidelity")
    ax.set_xlabel("iteration")
    ax.set_ylabel("value")
    ax.legend()
    return _save(fig, path)


def plot_finetune(report: dict, path) -> str:
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    labels = ["NU w/ noise", "NA w/ noise", "NU w/o noise", "NA w/o noise"]
    vals = [report["noisy_before"], report["noisy_after"],
            report["noiseless_before"], report["noiseless_after_prune"]]
    errs = [report.get("noisy_before_err", 0.0), report.get("noisy_after_err", 0.0), 0, 0]
    ax.bar(range(4), vals, yerr=errs, capsize=4,
           color=["tab:gray", "tab:blue", "tab:gray", "tab:blue"])
    ax.set_xticks(range(4))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("infidelity")
    ax.set_yscale("log")
    return _save(fig, path)
