"""Figure builders for the four kinds: structure, budget, sweep, flatness.

All third-order curves are normalized by eps * l by default so the exact
laws appear as the horizontal lines -4/3 and -4/5; pass raw=True for the
unnormalized view.  Rendering is read-only on its inputs and byte-stable
for fixed inputs and library versions (PNG metadata is stripped).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .schemas import BUDGET, ENERGY, FLATNESS, STRUCTURE, read_table

KINDS = ("structure", "budget", "sweep", "flatness")


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    epsilon: float = 1.0
    raw: bool = False
    log_x: bool = True
    reference_lines: bool = True
    ell_d: float | None = None
    ell_i: float | None = None
    nus: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind '{self.kind}'; pick from {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def _save(fig, path):
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def _shade_inertial(ax, spec):
    if spec.ell_d is not None and spec.ell_i is not None and spec.ell_d < spec.ell_i:
        ax.axvspan(spec.ell_d, spec.ell_i, color="0.9", zorder=0,
                   label=r"$[\ell_D,\ \ell_I]$")


def plot_structure(spec: FigureSpec):
    t = read_table(spec.inputs[0], STRUCTURE)
    ell = t["ell"]
    scale = np.ones_like(ell) if spec.raw else 1.0 / (spec.epsilon * ell)
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    _shade_inertial(ax, spec)
    ax.errorbar(ell, t["S0"] * scale, yerr=t["S0_stderr"] * scale, fmt="o-",
                ms=3, lw=1, label=r"$S_0$")
    ax.errorbar(ell, t["Spar"] * scale, yerr=t["Spar_stderr"] * scale, fmt="s-",
                ms=3, lw=1, label=r"$S_\parallel$")
    if spec.reference_lines and not spec.raw:
        ax.axhline(-4.0 / 3.0, color="k", ls="--", lw=0.8, label=r"$-4/3$")
        ax.axhline(-4.0 / 5.0, color="k", ls=":", lw=0.8, label=r"$-4/5$")
    if spec.log_x:
        ax.set_xscale("log")
    ax.set_xlabel(r"$\ell$")
    ax.set_ylabel(r"$S/\ell$" if spec.raw else r"$S/(\varepsilon\,\ell)$")
    ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    return fig


def plot_budget(spec: FigureSpec):
    t = read_table(spec.inputs[0], BUDGET)
    ell = t["ell"]
    s = 1.0 if spec.raw else 1.0 / spec.epsilon
    fig, axes = plt.subplots(1, 2, figsize=(8.6, 3.6), sharex=True)
    _shade_inertial(axes[0], spec)
    _shade_inertial(axes[1], spec)
    ax = axes[0]
    ax.plot(ell, t["S0_over_ell"] * s, "k-", lw=1.4, label=r"$S_0/\ell$")
    ax.plot(ell, t["viscous_term"] * s, "-", lw=1, label="viscous")
    ax.plot(ell, t["forcing_term_43"] * s, "-", lw=1, label="forcing")
    ax.plot(ell, (t["viscous_term"] + t["forcing_term_43"]) * s, "--", lw=1,
            label="sum")
    ax.fill_between(ell, (t["residual_43"] - 3 * t["residual_43_stderr"]) * s,
                    (t["residual_43"] + 3 * t["residual_43_stderr"]) * s,
                    alpha=0.3, label=r"residual $\pm 3$SE")
    if spec.reference_lines:
        ax.axhline(-4.0 / 3.0 * (1.0 if spec.raw else 1.0) * (spec.epsilon if spec.raw else 1.0),
                   color="k", ls="--", lw=0.8)
    ax.set_title("4/3 budget")
    ax = axes[1]
    ax.plot(ell, t["Spar_over_ell"] * s, "k-", lw=1.4, label=r"$S_\parallel/\ell$")
    ax.plot(ell, t["H_term"] * s, "-", lw=1, label=r"$-4\nu H/\ell$")
    ax.plot(ell, t["S0_integral_term"] * s, "-", lw=1, label=r"$S_0$ integral")
    ax.plot(ell, t["forcing_term_45"] * s, "-", lw=1, label="forcing")
    ax.plot(ell, (t["H_term"] + t["S0_integral_term"] + t["forcing_term_45"]) * s,
            "--", lw=1, label="sum")
    ax.fill_between(ell, (t["residual_45"] - 3 * t["residual_45_stderr"]) * s,
                    (t["residual_45"] + 3 * t["residual_45_stderr"]) * s,
                    alpha=0.3, label=r"residual $\pm 3$SE")
    if spec.reference_lines:
        ax.axhline(-4.0 / 5.0 * (spec.epsilon if spec.raw else 1.0),
                   color="k", ls=":", lw=0.8)
    ax.set_title("4/5 budget")
    for ax in axes:
        if spec.log_x:
            ax.set_xscale("log")
        ax.set_xlabel(r"$\ell$")
        ax.legend(fontsize=7, loc="best")
    axes[0].set_ylabel("terms" + ("" if spec.raw else r" $/\,\varepsilon$"))
    fig.tight_layout()
    return fig


def plot_sweep(spec: FigureSpec):
    if len(spec.nus) != len(spec.inputs):
        raise ValueError(
            f"sweep needs one viscosity per input ({len(spec.inputs)} inputs, "
            f"{len(spec.nus)} values)")
    nus, balance, wad = [], [], []
    for nu, path in sorted(zip(spec.nus, spec.inputs)):
        t = read_table(path, ENERGY)
        nus.append(nu)
        balance.append(np.mean(t["enstrophy_times_nu"]) / spec.epsilon)
        wad.append(nu * np.mean(t["energy"]))
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.plot(nus, balance, "o-", label=r"$\nu\langle\|\nabla u\|^2\rangle/\varepsilon$")
    ax.plot(nus, wad, "s-", label=r"$\nu\langle\|u\|^2\rangle$ (WAD)")
    if spec.reference_lines:
        ax.axhline(1.0, color="k", ls="--", lw=0.8)
        ax.axhline(0.0, color="k", ls=":", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel(r"$\nu$")
    ax.set_ylabel("diagnostic")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def plot_flatness(spec: FigureSpec):
    t = read_table(spec.inputs[0], FLATNESS)
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for p in sorted(set(int(v) for v in t["p"])):
        sel = (t["p"] == p) & np.isfinite(t["F"])
        order = np.argsort(t["shell_N"][sel])
        ax.errorbar(t["shell_N"][sel][order], t["F"][sel][order],
                    yerr=t["F_stderr"][sel][order], fmt="o-", ms=3, lw=1,
                    label=f"$p={p}$")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel(r"shell $N$")
    ax.set_ylabel(r"$F_p(N)$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


_BUILDERS = {
    "structure": plot_structure,
    "budget": plot_budget,
    "sweep": plot_sweep,
    "flatness": plot_flatness,
}


def plot(spec: FigureSpec) -> str:
    """Render the requested figure; returns the output path."""
    fig = _BUILDERS[spec.kind](spec)
    _save(fig, spec.output)
    return spec.output
