"""Static SVG figures (heatmap, line plot, collapse scatter) rendered with matplotlib."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def heatmap(path, alphas, Js, values, label="<m^2>"):
    """``values[i, j]`` belongs to ``alphas[i]``, ``Js[j]``; NaN cells stay blank."""
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.pcolormesh(np.asarray(Js), np.asarray(alphas), np.ma.masked_invalid(values),
                       shading="nearest", cmap="viridis")
    fig.colorbar(im, ax=ax, label=label)
    ax.set_xlabel("J")
    ax.set_ylabel("alpha")
    return _save(fig, path)


def lines(path, series, xlabel="J", ylabel="", logy=False):
    """``series`` maps a legend label to (x, y)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, (x, y) in series.items():
        ax.plot(x, y, marker="o", ms=3, label=name)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize="small")
    return _save(fig, path)


def collapse(path, points, title=""):
    """``points`` columns: N, J, x, y, dy."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for n in np.unique(points[:, 0]):
        p = points[points[:, 0] == n]
        ax.errorbar(p[:, 2], p[:, 3], yerr=p[:, 4], fmt="o", ms=3, label=f"N={int(n)}")
    ax.set_xlabel("N^(1/nu) (J - J_c)")
    ax.set_ylabel("N^(2 beta/nu) <m^2>")
    if title:
        ax.set_title(title, fontsize="small")
    ax.legend(fontsize="small")
    return _save(fig, path)
