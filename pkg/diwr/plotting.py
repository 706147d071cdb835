import os

import numpy as np
import seaborn as sns
import matplotlib.pyplot as plt


def plot_confidence_histogram(confidences, bins=50, ax=None):
    """
    Histogram of the confidence coefficients with a logarithmic count axis.

    A polarized optimization shows two spikes, at 0 and at 1, with few
    values in between.

    Parameters
    ----------
    confidences: array_like
        Values in [0, 1].
    bins: int
        Number of equal-width bins over [0, 1].
    ax: matplotlib.axes.Axes, optional
        Axes to draw on, a new figure is created otherwise.

    Returns
    -------
    matplotlib.axes.Axes
    """
    if ax is None:
        _, ax = plt.subplots(figsize=(6, 4))

    with sns.axes_style('white'):
        sns.histplot(np.asarray(confidences, dtype=float), bins=bins,
                     binrange=(0, 1), ax=ax, color='grey')
        ax.set_yscale('log')
        ax.set(xlabel='confidence', ylabel='points')
        sns.despine(ax=ax)
    return ax


def plot_traces(log):
    """
    Energy terms, weight change and orientation error over the iterations.

    Parameters
    ----------
    log: pd.DataFrame
        Optimizer log, as returned by ``OptimizerState.log``.

    Returns
    -------
    matplotlib.figure.Figure
    """
    columns = [c for c in ('e_diri', 'e_surf', 'e_area', 'e_conf', 'delta_a',
                           'orientation_error')
               if c in log and log[c].notna().any()]
    if not columns:
        raise ValueError('The log has no values to plot')

    fig, axes = plt.subplots(len(columns), 1, sharex=True,
                             figsize=(7, 2 * len(columns)), squeeze=False)
    steps = np.arange(len(log))
    for ax, column in zip(axes[:, 0], columns):
        values = log[column].astype(float)
        keep = values.notna().to_numpy()
        sns.lineplot(x=steps[keep], y=values[keep].to_numpy(), ax=ax,
                     marker='.', color='black')
        ax.set_ylabel(column)
    axes[-1, 0].set_xlabel('record')
    fig.tight_layout()
    return fig


def plot_effective_weights(cloud, outliers=None, ax=None):
    """
    Scatter of area weights against confidences.

    Parameters
    ----------
    cloud: PointCloud
        Optimized cloud.
    outliers: array_like of bool, optional
        Ground-truth outlier labels used to colour the points.
    ax: matplotlib.axes.Axes, optional
        Axes to draw on.

    Returns
    -------
    matplotlib.axes.Axes
    """
    if ax is None:
        _, ax = plt.subplots(figsize=(5, 5))

    hue = None
    if outliers is not None:
        outliers = np.asarray(outliers, dtype=bool)
        if outliers.shape != (len(cloud), ):
            raise ValueError('Expected %d outlier labels, got %d'
                             % (len(cloud), outliers.size))
        hue = np.where(outliers, 'outlier', 'inlier')

    sns.scatterplot(x=cloud.area_weights, y=cloud.confidences, hue=hue,
                    s=8, linewidth=0, ax=ax)
    ax.set(xlabel='area weight', ylabel='confidence')
    return ax


# file written for every plot by save_plots
PLOT_FILES = {'confidences': 'confidence_histogram.png',
              'traces': 'traces.png',
              'weights': 'effective_weights.png'}


def save_plots(cloud, log, out_dir, outliers=None, dpi=150):
    """
    Write the diagnostic plots of a reconstruction as PNG files.

    Parameters
    ----------
    cloud: PointCloud
        Optimized cloud.
    log: pd.DataFrame
        Optimizer log.
    out_dir: str
        Directory to write to, created when missing.
    outliers: array_like of bool, optional
        Ground-truth outlier labels for the weight scatter.
    dpi: int
        Resolution of the images.

    Returns
    -------
    dict
        Path written for each key of `PLOT_FILES`.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, filename)
             for name, filename in PLOT_FILES.items()}

    figures = {'confidences': plot_confidence_histogram(
                   cloud.confidences).figure,
               'traces': plot_traces(log),
               'weights': plot_effective_weights(cloud, outliers).figure}
    for name, fig in figures.items():
        fig.savefig(paths[name], dpi=dpi, bbox_inches='tight')
        plt.close(fig)
    return paths
