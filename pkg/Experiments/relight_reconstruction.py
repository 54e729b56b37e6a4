from Experiments.base_reconstruction import base_reconstruction

save_file = 'relight_reconstruction.csv'
image_size = 32
n_iters = 1
iterations = 1000  # reflective stage
configs = {
    'M_f': [15],
    'M_b': [8],
    'geometry_iterations': [1000],  # emissive proxy stage before the reflective one
}
threads = 4
print_time = True

results = base_reconstruction(kind='relight', image_size=image_size, n_iters=n_iters,
                              iterations=iterations, configs=configs, threads=threads,
                              print_time=print_time)

results.to_csv(f'Results/{save_file}', index=False)
