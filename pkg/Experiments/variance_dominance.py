import pandas as pd

from Experiments.base_estimator_study import (base_gradient_study, occluder_scenes,
                                              random_occluder_scenes)

save_file = 'variance_dominance.csv'
n_random_scenes = 50  # random scenes with one occluder of opacity in [0.9, 0.99)
occluder_alphas = [0.5, 0.9, 0.99, 0.999]  # opacity sweep on one fixed geometry
n_behind = 6  # Gaussians behind the occluder in the sweep
M_b = 8
n_trials = 100_000
random_seed = 0
print_time = True

random_results = base_gradient_study(scenes=random_occluder_scenes(n_random_scenes,
                                                                   random_seed=random_seed),
                                     M_b=M_b, n_trials=n_trials, random_seed=random_seed,
                                     occluder_id=0, print_time=print_time)
sweep_results = base_gradient_study(scenes=occluder_scenes(occluder_alphas, n_behind, random_seed),
                                    M_b=M_b, n_trials=n_trials, random_seed=random_seed,
                                    occluder_id=0, print_time=print_time)
sweep_results['scene_id'] += n_random_scenes
results = pd.concat([random_results, sweep_results], ignore_index=True)

ratios = random_results.groupby('scene_id')['occluder_ratio'].first()
print(f'occluder variance ratio >= 4 on {(ratios >= 4).sum()} of {len(ratios)} random scenes; '
      f'median {ratios.median():.3g}')

results.to_csv(f'Results/{save_file}', index=False)
