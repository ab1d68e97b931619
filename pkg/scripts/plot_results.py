"""Plot CSV artifacts written by the ``richards-dd`` CLI (needs matplotlib, not a package dependency).

    python3 scripts/plot_results.py RESULTS_DIR [--save out.png]

Draws whatever is present among constitutive.csv, fields_*.csv, tau_study.csv and eps_study.csv.
"""

import argparse
import re
from pathlib import Path

import numpy as np


def _load(path):
    return np.genfromtxt(path, delimiter=",", names=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("results", type=Path)
    ap.add_argument("--save", type=Path)
    args = ap.parse_args()
    try:
        import matplotlib
        if args.save:
            matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise SystemExit("matplotlib is required for plotting: pip install matplotlib")

    panels = []
    if (args.results / "constitutive.csv").exists():
        panels.append("constitutive")
    fields = sorted(args.results.glob("fields_*.csv"), key=lambda p: int(re.findall(r"\d+", p.stem)[0]))
    if fields:
        panels.append("fields")
    studies = [n for n in ("tau_study", "eps_study") if (args.results / f"{n}.csv").exists()]
    panels += studies
    if not panels:
        raise SystemExit(f"nothing to plot in {args.results}")

    fig, axes = plt.subplots(1, len(panels), figsize=(4.5 * len(panels), 3.8), squeeze=False)
    for ax, panel in zip(axes[0], panels):
        if panel == "constitutive":
            d = _load(args.results / "constitutive.csv")
            for name in ("theta", "K", "Kbar_z"):
                ax.plot(d["eta"], d[name], label=name)
            ax.set_xlabel("u")
            ax.legend()
        elif panel == "fields":
            for p in fields:
                d = np.genfromtxt(p, delimiter=",", names=True)
                ax.plot(d["z"], d["u"], lw=1)
            ax.set_xlabel("z")
            ax.set_ylabel("u")
        else:
            d = _load(args.results / f"{panel}.csv")
            x = d.dtype.names[0]
            ax.loglog(d[x], d["distance"], "o-")
            ax.set_xlabel(x)
            ax.set_ylabel("distance")
        ax.set_title(panel)
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
