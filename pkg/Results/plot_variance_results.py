from Results.base_plot_study import plot_study

file_name = 'Results/variance_dominance.csv'
vars = {
    'x_var': 'scene',
    'col_var': 'component'
}
calc_vars = {}

# one ratio per (Gaussian, component); the ssplats rows repeat it
plot_study(file_name=file_name, vars=vars, value='ratio', calc_vars=calc_vars,
           query="estimator == 'ours' and component != 'dc'", log_y=True)

# distribution of the occluder's ratio, one row per scene
plot_study(file_name=file_name, vars={'x_var': 'scene'}, value='occluder_ratio',
           query="param == 'ours/gaussians[0].dc'", kind='strip', log_y=True)
