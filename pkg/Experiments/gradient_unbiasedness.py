from Experiments.base_estimator_study import base_gradient_study, random_axis_scenes

save_file = 'gradient_unbiasedness.csv'
n_scenes = 20
n_gaussians = 16
M_b = 8  # backward rounds per estimate
n_trials = 100_000  # rounds per estimator and scene
random_seed = 0
print_time = True

results = base_gradient_study(scenes=random_axis_scenes(n_scenes, n_gaussians, random_seed),
                              M_b=M_b, n_trials=n_trials, random_seed=random_seed,
                              print_time=print_time)

results.to_csv(f'Results/{save_file}', index=False)
