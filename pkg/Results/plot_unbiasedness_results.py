from Results.base_plot_study import plot_study

file_name = 'Results/forward_unbiasedness.csv'
vars = {
    'x_var': 'n_gaussians',
    'col_var': 'channel'
}
plot_study(file_name=file_name, vars=vars, value='z')

file_name = 'Results/gradient_unbiasedness.csv'
vars = {
    'x_var': 'component',
    'hue_var': 'estimator'
}
plot_study(file_name=file_name, vars=vars, value='z')
