import numpy as np
import torch
import torch.nn as nn

from Models.gaussian import UNIT_TOL
from Models.scene import scene_from_arrays

PARAM_GROUPS = ('mean', 'rotation', 'log_scales', 'density_logit', 'appearance', 'normal')


class GaussianParams(nn.Module):
    """Trainable float64 Gaussian parameters, one nn.Parameter per group.

    `appearance` holds emissive RGB or reflective albedo depending on each
    Gaussian's appearance type in `template`; `normal` is only used by
    reflective Gaussians.
    """

    def __init__(self, template):
        super().__init__()
        self.template = template
        values = {
            'mean': template.means,
            'rotation': template.quats,
            'log_scales': template.log_scales,
            'density_logit': template.density_logits,
            'appearance': np.where(template.reflective[:, None], template.albedos, template.colors),
            'normal': template.normals,
        }
        for name in PARAM_GROUPS:
            setattr(self, name, nn.Parameter(torch.from_numpy(np.array(values[name], dtype=np.float64))))
        self.reflective = torch.from_numpy(template.reflective.copy())

    def forward(self):
        return self.to_scene()

    def numpy(self, name):
        return getattr(self, name).detach().numpy().copy()

    def to_scene(self):
        return scene_from_arrays(self.template, self.numpy('mean'), self.numpy('rotation'),
                                 self.numpy('log_scales'), self.numpy('density_logit'),
                                 self.numpy('appearance'), self.numpy('normal'))

    def set_grads(self, buffer):
        for name in PARAM_GROUPS:
            getattr(self, name).grad = torch.from_numpy(np.array(getattr(buffer, name), dtype=np.float64))

    @torch.no_grad()
    def project_(self):
        """Back onto the valid domain: unit quaternions and normals, albedo in
        [0, 1], emissive colour >= 0. Rows already valid are left bit-identical."""
        for name in ('rotation', 'normal'):
            p = getattr(self, name)
            norm = torch.linalg.norm(p, dim=1, keepdim=True)
            off = (norm - 1.0).abs() > UNIT_TOL
            p.copy_(torch.where(off, p / norm, p))
        app = self.appearance
        refl = self.reflective[:, None]
        app.copy_(torch.where(refl, app.clamp(0.0, 1.0), app.clamp(min=0.0)))
