from Experiments.base_estimator_study import base_forward_unbiasedness

"""NOTE: the CWD needs to be set to the base directory, which must be on the
PYTHONPATH."""

save_file = 'forward_unbiasedness.csv'  # saved inside Results/ folder
n_scenes = 20  # random axis scenes per Gaussian count
n_gaussians = [1, 4, 16, 64]  # Gaussians along the ray
n_trials = 100_000  # single-sample colour draws per scene
random_seed = 0
print_time = True

results = base_forward_unbiasedness(n_scenes=n_scenes, n_gaussians=n_gaussians,
                                    n_trials=n_trials, random_seed=random_seed,
                                    print_time=print_time)

results.to_csv(f'Results/{save_file}', index=False)
