from Experiments.base_reconstruction import base_reconstruction

"""Any arguments that are inside a list are all run. Combining several lists
multiplies the number of training runs."""

save_file = 'toy_reconstruction.csv'
image_size = 64
n_iters = 3  # seeds per configuration
iterations = 2000
configs = {
    'backward_mode': ['stochastic', 'analytic'],
    'forward_mode': ['sorted', 'stochastic'],  # stochastic = full-stochastic ablation
    'M_b': [8],
}
threads = 4
print_time = True

results = base_reconstruction(kind='toy', image_size=image_size, n_iters=n_iters,
                              iterations=iterations, configs=configs, threads=threads,
                              print_time=print_time)

results.to_csv(f'Results/{save_file}', index=False)
