from Results.base_plot_study import plot_study, plot_training_curves

file_name = 'Results/toy_reconstruction.csv'
vars = {
    'hue_var': 'backward_mode',
    'col_var': 'forward_mode'
}
plot_training_curves(file_name=file_name, vars=vars, value='psnr')
plot_training_curves(file_name=file_name, vars=vars, value='loss')

vars = {
    'x_var': 'backward_mode',
    'hue_var': 'forward_mode'
}
plot_study(file_name=file_name, vars=vars, value='final_psnr', query='iteration == 0')

file_name = 'Results/relight_reconstruction.csv'
vars = {
    'hue_var': 'M_f',
}
plot_training_curves(file_name=file_name, vars=vars, value='psnr')

vars = {
    'x_var': 'M_f',
}
for value in ('albedo_error', 'heldout_psnr'):
    plot_study(file_name=file_name, vars=vars, value=value, query='iteration == 0', kind='strip')
