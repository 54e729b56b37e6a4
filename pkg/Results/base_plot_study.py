import numpy as np
import pandas as pd
import seaborn as sns


def plot_study(file_name, vars, value, calc_vars=None, query=None, kind='box', log_y=False):
    """catplot of one value column of a study CSV, saved next to it."""
    results = pd.read_csv(file_name)
    for k, v in (calc_vars or {}).items():
        results[k] = results.eval(v)
    if query:
        results = results.query(query)
    results = results.replace([np.inf, -np.inf], np.nan).dropna(subset=[value])
    results = results.drop(
        columns=[c for c in results.columns if c not in vars.values() and c != value])

    results_plot = sns.catplot(data=results, x=vars['x_var'], y=value,
                               hue=vars.get('hue_var'),
                               row=vars.get('row_var'), col=vars.get('col_var'),
                               kind=kind, sharex=True, sharey=False)
    if log_y:
        results_plot.set(yscale='log')

    results_plot.figure.savefig(f'{file_name.rsplit(".", 1)[0]}_{value}_{kind}plot.png')


def plot_training_curves(file_name, vars, value='psnr'):
    results = pd.read_csv(file_name)
    results_plot = sns.relplot(data=results, x='iteration', y=value,
                               hue=vars.get('hue_var'), col=vars.get('col_var'),
                               style=vars.get('style_var'), kind='line', errorbar='sd')

    results_plot.figure.savefig(f'{file_name.rsplit(".", 1)[0]}_{value}.png')
