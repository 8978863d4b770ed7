"""Plots for structure search and retrieval reports."""
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt

from sdgraph.config import FIGURE_SIZE, COLORS


class SdgVisualizer:
    """Creates visualizations of learning and retrieval runs."""

    @staticmethod
    def create_score_plot(
        trajectory: Sequence[float],
        save_path: str | Path | None = None
    ) -> Path | None:
        """Plot the BIC score after each accepted tabu move."""
        plt.figure(figsize=FIGURE_SIZE)

        plt.plot(range(len(trajectory)), trajectory, marker='o', label='BIC', color=COLORS['score'])

        plt.title('Structure Search')
        plt.xlabel('Accepted move')
        plt.ylabel('BIC score')
        plt.grid(True, linestyle='--', alpha=0.7, color=COLORS['grid'])
        plt.legend()
        plt.tight_layout()

        if save_path:
            save_path = Path(save_path)
            plt.savefig(save_path)
        plt.close()

        return save_path

    @staticmethod
    def create_recall_plot(
        recall_at: Mapping[int, float],
        save_path: str | Path | None = None
    ) -> Path | None:
        """Bar chart of recall@K in percent."""
        plt.figure(figsize=FIGURE_SIZE)

        ks = sorted(recall_at)
        plt.bar([f'R@{k}' for k in ks], [100.0 * recall_at[k] for k in ks], color=COLORS['recall'])

        plt.title('Image Retrieval')
        plt.ylabel('Recall (%)')
        plt.ylim(0, 100)
        plt.grid(True, axis='y', linestyle='--', alpha=0.7, color=COLORS['grid'])
        plt.tight_layout()

        if save_path:
            save_path = Path(save_path)
            plt.savefig(save_path)
        plt.close()

        return save_path
