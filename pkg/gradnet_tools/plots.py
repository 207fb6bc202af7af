#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# gradnet_tools - Gradient-guided template update for siamese trackers
# Copyright (c) 2019 The gradnet_tools developers
#
# This program is free software; you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.
#

from pathlib import Path
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import logging

log = logging.getLogger(__name__)


def _save(fig, filename):
    Path(filename).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(str(filename), dpi=100, bbox_inches='tight')
    plt.close(fig)
    log.debug('Wrote plot {}'.format(filename))
    return filename


def plot_ope(results, filename):
    """Precision and success plots, ``results`` maps a label to an OPEResult."""
    fig, (ax_p, ax_s) = plt.subplots(1, 2, figsize=(11, 4.5))
    for name, ope in results.items():
        ax_p.plot(ope.precision_thresholds, ope.precision_curve,
                  label='{} [{:.3f}]'.format(name, ope.precision))
        ax_s.plot(ope.success_thresholds, ope.success_curve,
                  label='{} [{:.3f}]'.format(name, ope.auc))
    ax_p.set_title('Precision plots of OPE')
    ax_p.set_xlabel('Location error threshold')
    ax_p.set_ylabel('Precision')
    ax_s.set_title('Success plots of OPE')
    ax_s.set_xlabel('Overlap threshold')
    ax_s.set_ylabel('Success rate')
    for ax in (ax_p, ax_s):
        ax.set_ylim(0, 1.02)
        ax.grid(True, alpha=0.3)
        ax.legend(loc='lower left' if ax is ax_s else 'lower right', fontsize=8)
    return _save(fig, filename)


def plot_overfit(curves, filename):
    """Training loss (left) and held-out accuracy (right) per variant."""
    fig, (ax_l, ax_h) = plt.subplots(1, 2, figsize=(11, 4.5))
    for variant, c in curves.items():
        if c.steps:
            ax_l.plot(c.steps, c.loss_final, label=variant)
        if c.heldout_steps:
            ax_h.plot(c.heldout_steps, c.heldout_accuracy, marker='o', label=variant)
    ax_l.set_xlabel('step')
    ax_l.set_ylabel('training loss L*')
    ax_h.set_xlabel('step')
    ax_h.set_ylabel('held-out accuracy')
    for ax in (ax_l, ax_h):
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    return _save(fig, filename)


def plot_weight_ratios(summaries, filename):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for variant, s in summaries.items():
        edges = np.array(s.bin_edges)
        counts = np.array(s.histogram, dtype=np.float64)
        if counts.sum() > 0:
            counts /= counts.sum()
        ax.step(edges[:-1], counts, where='post', label='{} (median {:.3f})'.format(variant, s.median))
    ax.set_xlabel('|U2(G)| / (|f2(Z)| + |U2(G)|)')
    ax.set_ylabel('fraction of elements')
    ax.legend(fontsize=8)
    return _save(fig, filename)


def plot_score_maps(diagnostics, filename):
    """Rows of (S, S*) pairs per model."""
    names = [n for n in diagnostics if diagnostics[n].grids]
    if not names:
        return None
    n_cols = max(len(diagnostics[n].grids) for n in names)
    fig, axes = plt.subplots(2 * len(names), n_cols, figsize=(1.6 * n_cols, 3.2 * len(names)), squeeze=False)
    for i, name in enumerate(names):
        for j in range(n_cols):
            for k, key in enumerate(('initial', 'final')):
                ax = axes[2 * i + k, j]
                ax.axis('off')
                if j < len(diagnostics[name].grids):
                    ax.imshow(np.array(diagnostics[name].grids[j][key]), cmap='viridis')
                    if j == 0:
                        ax.set_title('{} {}'.format(name, 'S' if key == 'initial' else 'S*'), fontsize=8, loc='left')
    return _save(fig, filename)
