import numpy as np
import pandas as pd

from generate_data import generate_relight_scene, generate_toy_scene, initial_guess, render_dataset
from Models.render import render_image
from Models.torch.torch_trainer import TrainConfig, train

save_file = 'determinism.csv'
threads = [1, 2, 4, 8]
image_size = 48  # > one tile per image so several tiles run in parallel
iterations = 5
random_seed = 7

toy = generate_toy_scene(random_seed, size=image_size)
relight = generate_relight_scene(random_seed, size=image_size)
dataset = render_dataset(toy, random_seed=random_seed)
init = initial_guess(toy, random_seed)

rows = []
reference = {}
for t in threads:
    outputs = {
        'render_stochastic': render_image(toy, toy.cameras[0], 'stochastic', 30, random_seed, t).data,
        'relight': render_image(relight, relight.cameras[0], 'stochastic', 15, random_seed, t).data,
        'train': train(init, dataset, TrainConfig(iterations=iterations, seed=random_seed, threads=t),
                       progress=False)[0].means,
    }
    for name, value in outputs.items():
        reference.setdefault(name, value)
        rows.append([name, t, bool(np.array_equal(value, reference[name])),
                     float(np.max(np.abs(value - reference[name])))])
    print(f'threads {t} done')

pd.DataFrame(rows, columns=['output', 'threads', 'identical', 'max_abs_diff']).to_csv(
    f'Results/{save_file}', index=False)
