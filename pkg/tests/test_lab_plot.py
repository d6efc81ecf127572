import pandas as pd

from src.lab_plot import plot_experiment, plot_ratio, plot_wulff


def ratio_rows(**extra):
    return pd.DataFrame({
        "L": [2, 3, 4], "beta": [4.0] * 3, "ratio_log": [0.0, -0.1, -0.2],
        "err_lo": [-0.05, -0.15, -0.25], "err_hi": [0.05, -0.05, -0.15], **extra,
    })


def test_plot_ratio_with_fit():
    fits = pd.DataFrame({"beta": [4.0], "slope": [-0.1], "intercept": [0.2]})
    fig = plot_ratio(ratio_rows(), fits, grid=True)
    ax = fig.axes[0]
    assert ax.get_xlabel() == "L"
    assert len(ax.lines) >= 2


def test_plot_pinning_groups_by_strength():
    rows = pd.concat([ratio_rows(M=[0.0] * 3), ratio_rows(M=[10.0] * 3)])
    fig = plot_ratio(rows)
    labels = [t.get_text() for t in fig.axes[0].get_legend().get_texts()]
    assert labels == ["beta=4, M=0", "beta=4, M=10"]


def test_plot_wulff():
    rows = pd.DataFrame({"beta": [4.0] * 3, "theta": [0.0, 0.5, 1.0], "h1": [4.0, 3.0, 0.1], "h2": [0.1, 3.0, 4.0]})
    assert plot_wulff(rows).axes[0].get_ylabel() == "h2"


def test_plot_experiment(tmp_path):
    path = tmp_path / "ratio.png"
    assert plot_experiment("ratio", ratio_rows(), None, path) == path
    assert path.exists()
    assert plot_experiment("tilt", ratio_rows(), None, tmp_path / "tilt.png") is None
