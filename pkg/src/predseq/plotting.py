"""PNG figures for the CLI's ``--plot`` option (matplotlib, Agg backend)."""


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    fig.clf()


def stopping_cdf(rows, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method in sorted({r["method"] for r in rows}):
        sel = [r for r in rows if r["method"] == method]
        ax.step([r["tau"] for r in sel], [r["cdf"] for r in sel], where="post", label=method)
    ax.set_xlabel("stopping time")
    ax.set_ylabel("cumulative probability")
    ax.legend()
    _save(fig, path)
    plt.close(fig)


def power_curves(rows, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method in sorted({r["method"] for r in rows}):
        sel = sorted((r for r in rows if r["method"] == method), key=lambda r: r["theta"])
        ax.errorbar([r["theta"] for r in sel], [r["power"] for r in sel],
                    yerr=[2 * r["se"] for r in sel], label=method, capsize=2)
    ax.set_xlabel("effect size")
    ax.set_ylabel("power")
    ax.legend()
    _save(fig, path)
    plt.close(fig)


def gamma_tradeoff(rows, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([r["n_inflated"] for r in rows], [r["tau_mean"] for r in rows], "o-")
    for r in rows:
        ax.annotate(f"{r['gamma']:g}", (r["n_inflated"], r["tau_mean"]), fontsize=7,
                    textcoords="offset points", xytext=(3, 3))
    ax.set_xlabel("maximum sample size N'")
    ax.set_ylabel("mean stopping time")
    _save(fig, path)
    plt.close(fig)


def table_s1(rows, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = [r["n_inflated"] for r in rows]
    ax.plot(x, [r["tau_mean"] for r in rows], "o-", label="mean")
    ax.fill_between(x, [r["tau_q25"] for r in rows], [r["tau_q75"] for r in rows], alpha=0.3, label="IQR")
    ax.plot(x, x, "k:", lw=0.8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("N'")
    ax.set_ylabel("stopping time")
    ax.legend()
    _save(fig, path)
    plt.close(fig)


def q_trajectory(records, gamma, path, key="q", label="Q"):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([r["index"] for r in records], [r[key] for r in records], ".-", label=label)
    ax.axhline(gamma, color="k", ls="--", lw=0.8)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("look")
    ax.set_ylabel(label)
    _save(fig, path)
    plt.close(fig)


def intervals(rows, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    n = [r["n"] for r in rows]
    ax.plot(n, [r["lower"] for r in rows], label="lower")
    if any(r["upper"] != float("inf") for r in rows):
        ax.plot(n, [r["upper"] for r in rows], label="upper")
    ax.set_xlabel("n")
    ax.legend()
    _save(fig, path)
    plt.close(fig)
