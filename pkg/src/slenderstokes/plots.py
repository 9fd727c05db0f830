"""Static SVG figures for the benchmark tables."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _rows_by(rows, columns, key):
    idx = columns.index(key)
    groups = {}
    for r in rows:
        groups.setdefault(r[idx], []).append(r)
    return groups, columns


def render_figure(experiment: str, columns, rows, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if experiment == "channel":
        col = {c: i for i, c in enumerate(columns)}
        keys = sorted({(r[col["precond"]], r[col["level"]], r[col["h"]]) for r in rows})
        for kind, level, h in keys:
            sel = [r for r in rows if (r[col["precond"]], r[col["level"]], r[col["h"]]) == (kind, level, h)]
            sel.sort(key=lambda r: r[col["L"]])
            lab = f"{kind} (level {level})" if level >= 0 else f"{kind} (h={h:g})"
            ax.loglog([r[col["L"]] for r in sel],
                      [r[col["cond_estimate"]] for r in sel], "o-", label=lab)
        ax.set_xlabel("channel length L")
        ax.set_ylabel("condition number estimate")
    elif experiment == "alpha_sweep":
        col = {c: i for i, c in enumerate(columns)}
        rows = sorted(rows, key=lambda r: r[col["alpha"]])
        a = [r[col["alpha"]] for r in rows]
        ax.loglog(a, [r[col["cond_estimate"]] for r in rows], "o-", label="cond")
        ax2 = ax.twinx()
        ax2.semilogx(a, [r[col["minres_iters"]] for r in rows], "s--", color="C1",
                     label="iterations")
        ax2.set_ylabel("MINRES iterations")
        ax.axvline(1.0 / 12.0, color="grey", lw=0.8, ls=":")
        ax.set_xlabel("coefficient weight alpha")
        ax.set_ylabel("condition number estimate")
    elif experiment == "aniso":
        col = {c: i for i, c in enumerate(columns)}
        groups, _ = _rows_by(rows, columns, "W")
        for W in sorted(groups, reverse=True):
            sel = sorted(groups[W], key=lambda r: r[col["beta"]])
            ax.loglog([r[col["beta"]] for r in sel],
                      [r[col["cond_estimate"]] for r in sel], "o-", label=f"W={W:g}")
        ax.set_xlabel("short-direction weight ratio beta")
        ax.set_ylabel("condition number estimate")
    elif experiment == "constriction":
        col = {c: i for i, c in enumerate(columns)}
        groups, _ = _rows_by(rows, columns, "precond")
        for kind in sorted(groups):
            sel = sorted(groups[kind], key=lambda r: r[col["W"]], reverse=True)
            r_vals = [(1.0 - r[col["W"]]) / 2.0 for r in sel]
            ax.semilogy(r_vals, [r[col["minres_iters"]] for r in sel], "o-", label=kind)
        ax.set_xlabel("constriction depth r")
        ax.set_ylabel("MINRES iterations")
    elif experiment == "convergence":
        col = {c: i for i, c in enumerate(columns)}
        rows = sorted(rows, key=lambda r: -r[col["h"]])
        h = np.array([r[col["h"]] for r in rows])
        for name in ("err_p", "err_ux", "err_uy"):
            ax.loglog(h, [r[col[name]] for r in rows], "o-", label=name)
        ax.loglog(h, h**2 * rows[0][col["err_p"]] / h[0] ** 2, "k:", label="O(h^2)")
        ax.set_xlabel("mesh size h")
        ax.set_ylabel("error")
    elif experiment == "norm_equiv":
        col = {c: i for i, c in enumerate(columns)}
        rows = sorted(rows, key=lambda r: r[col["L"]])
        L = [r[col["L"]] for r in rows]
        ax.semilogx(L, [r[col["r_sum_max"]] / r[col["r_sum_min"]] for r in rows],
                    "o-", label="spread of ||q||_* / ||q||_{L2+WH1}")
        ax.semilogx(L, [r[col["r_L2_max"]] for r in rows], "s--",
                    label="max ||q||_{L2} / ||q||_*")
        ax.set_xlabel("channel length L")
        ax.set_ylabel("ratio")
    else:
        raise ValueError(f"no figure for experiment {experiment!r}")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
