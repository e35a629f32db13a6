"""Downstream figure rendering: turn the delimited artifacts of a run
directory into PNG files placed alongside them.

Kept separate from the solver CLI on purpose — runs stay plot-free and
reproducible, and figures are always derived from the CSV files, never from
in-memory state.
"""
from __future__ import annotations

import argparse
import os
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _load_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _fig_orbit(run_dir, made):
    path = os.path.join(run_dir, "orbit.csv")
    if not os.path.exists(path):
        return
    _, data = _load_csv(path)
    t, x = data[:, 0], data[:, 1]
    dens = data[:, 2] ** 2 + data[:, 3] ** 2
    n_t = len(np.unique(t))
    n_x = len(x) // n_t
    fig, ax = plt.subplots(figsize=(6, 4))
    mesh = ax.pcolormesh(x[:n_x], t[::n_x], dens.reshape(n_t, n_x),
                         shading="nearest", cmap="magma")
    fig.colorbar(mesh, ax=ax, label=r"$|\psi(t,x)|^2$")
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    out = os.path.join(run_dir, "orbit_density.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    made.append(out)


def _fig_marginal(run_dir, made):
    path = os.path.join(run_dir, "marginal.csv")
    if not os.path.exists(path):
        return
    _, data = _load_csv(path)
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(data[:, 0], data[:, 1])
    ax.set_xlabel("t")
    ax.set_ylabel("marginal particle density")
    ax.set_ylim(bottom=0)
    out = os.path.join(run_dir, "marginal_density.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    made.append(out)


def _fig_survival(run_dir, made):
    path = os.path.join(run_dir, "survival.csv")
    if not os.path.exists(path):
        return
    _, data = _load_csv(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(data[:, 0], data[:, 1], label="diagonalization")
    ax.semilogy(data[:, 0], data[:, 2], "--", label="exponential decay law")
    ax.set_xlabel("t")
    ax.set_ylabel("survival probability")
    ax.legend()
    out = os.path.join(run_dir, "survival.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    made.append(out)


def _fig_smatrix(run_dir, made):
    path = os.path.join(run_dir, "smatrix.csv")
    if not os.path.exists(path):
        return
    _, data = _load_csv(path)
    born = np.hypot(data[:, 2], data[:, 3])
    exact = np.hypot(data[:, 4], data[:, 5])
    idx = np.arange(len(born))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(idx, exact, "o-", label="propagated")
    ax.plot(idx, born, "s--", label="first order")
    ax.set_xlabel("momentum pair index")
    ax.set_ylabel("|S(p, p')|")
    ax.legend()
    out = os.path.join(run_dir, "smatrix.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    made.append(out)


def _fig_probabilities(run_dir, made):
    path = os.path.join(run_dir, "probabilities.csv")
    if not os.path.exists(path):
        return
    labels, probs = [], []
    with open(path) as fh:
        next(fh)
        for line in fh:
            label, _, value = line.rstrip("\n").rpartition(",")
            labels.append(label.strip('"'))
            probs.append(float(value))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(range(len(probs)), probs)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("outcome probability")
    out = os.path.join(run_dir, "probabilities.png")
    fig.savefig(out, dpi=150, bbox_inches="tight")
    plt.close(fig)
    made.append(out)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qet-report",
        description="Render PNG figures from the CSV artifacts of a run "
                    "directory, next to the files they come from")
    parser.add_argument("run_dir", help="directory produced by 'qet run'")
    args = parser.parse_args(argv)
    if not os.path.isdir(args.run_dir):
        print(f"error: no such run directory: {args.run_dir}", file=sys.stderr)
        return 2
    made: list[str] = []
    for renderer in (_fig_orbit, _fig_marginal, _fig_survival,
                     _fig_smatrix, _fig_probabilities):
        renderer(args.run_dir, made)
    if not made:
        print("no recognized artifacts found; nothing rendered",
              file=sys.stderr)
        return 1
    for path in made:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
