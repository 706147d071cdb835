import matplotlib
matplotlib.use('Agg')

import os  # noqa: E402
import tempfile  # noqa: E402

import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402

from unittest import main, TestCase  # noqa: E402

from diwr.fixtures import random_cloud  # noqa: E402
from diwr.optimizer import LOG_COLUMNS  # noqa: E402
from diwr.plotting import (PLOT_FILES, save_plots,  # noqa: E402
                           plot_confidence_histogram,
                           plot_effective_weights, plot_traces)


class PlottingTests(TestCase):
    def tearDown(self):
        plt.close('all')

    def test_confidence_histogram(self):
        values = np.r_[np.zeros(40), np.ones(60), [0.5]]
        ax = plot_confidence_histogram(values, bins=10)

        self.assertEqual(ax.get_yscale(), 'log')
        self.assertEqual(ax.get_xlabel(), 'confidence')
        heights = [patch.get_height() for patch in ax.patches]
        self.assertEqual(sum(heights), 101)

    def test_traces(self):
        log = pd.DataFrame([{'t': 0, 'stage': 'area', 'e_diri': 2.0,
                             'e_surf': .1, 'delta_a': .3},
                            {'t': 0, 'stage': 'conf', 'e_diri': 1.0,
                             'e_conf': 4.0}], columns=LOG_COLUMNS)
        fig = plot_traces(log)

        labels = [ax.get_ylabel() for ax in fig.axes]
        self.assertEqual(labels, ['e_diri', 'e_surf', 'e_conf', 'delta_a'])

    def test_empty_traces(self):
        with self.assertRaisesRegex(ValueError, 'no values'):
            plot_traces(pd.DataFrame(columns=LOG_COLUMNS))

    def test_effective_weights(self):
        cloud = random_cloud(30)
        outliers = np.zeros(30, dtype=bool)
        outliers[:5] = True

        ax = plot_effective_weights(cloud, outliers)
        self.assertEqual(ax.get_ylabel(), 'confidence')
        self.assertEqual(len(ax.collections[0].get_offsets()), 30)

        fig, ax = plt.subplots()
        self.assertIs(plot_effective_weights(cloud, ax=ax), ax)

        with self.assertRaisesRegex(ValueError, 'Expected 30'):
            plot_effective_weights(cloud, outliers[:10])

    def test_save_plots(self):
        cloud = random_cloud(30)
        log = pd.DataFrame([{'t': 0, 'stage': 'area', 'e_diri': 2.0,
                             'e_surf': .1, 'delta_a': .3}],
                           columns=LOG_COLUMNS)

        with tempfile.TemporaryDirectory() as tmp:
            out_dir = os.path.join(tmp, 'plots')
            paths = save_plots(cloud, log, out_dir, dpi=50)

            self.assertEqual(set(paths), set(PLOT_FILES))
            for name, path in paths.items():
                self.assertEqual(os.path.basename(path), PLOT_FILES[name])
                self.assertGreater(os.path.getsize(path), 0)
        self.assertEqual(plt.get_fignums(), [])


if __name__ == '__main__':
    main()
