import numpy as np
from scipy.spatial.transform import Rotation

from Models.camera import FisheyeCamera, PinholeCamera, look_at
from Models.dataloader import Dataset
from Models.gaussian import Emissive, Gaussian, Reflective
from Models.relight import PointLight
from Models.render import render_image
from Models.scene import Scene

RANDOM_SEED = 2023
IMAGE_SIZE = 64
N_VIEWS = 8
CAMERA_RADIUS = 4.0
CAMERA_FOV = np.pi / 4
AXIS_SCALE = 0.05
HELDOUT_SEED_OFFSET = 1000


def generate_random_scene(
		n_gaussians, random_seed=RANDOM_SEED, extent=1.0, reflective=False,
		log_scale_range=(-2.5, -1.5), alpha_range=(0.2, 0.9), background=(0., 0., 0.),
		reflectance_model='lambert'
):

	rs = np.random.RandomState(random_seed)

	# Gaussians inside a cube of half-width `extent`
	means = rs.uniform(-extent, extent, size=(n_gaussians, 3))
	quats = random_quaternions(rs, n_gaussians)
	log_scales = rs.uniform(*log_scale_range, size=(n_gaussians, 3))
	density_logits = logit(rs.uniform(*alpha_range, size=n_gaussians))

	gaussians = []
	for k in range(n_gaussians):
		if reflective:
			appearance = Reflective(rs.uniform(0.1, 0.9, size=3), normed_uniform(rs, 3),
									reflectance_model)
		else:
			appearance = Emissive(rs.uniform(0.05, 1.0, size=3))
		gaussians.append(Gaussian(means[k], quats[k], log_scales[k], density_logits[k], appearance))

	return Scene(gaussians=gaussians, background=background)


def generate_axis_scene(alphas, depths, colors, background=(0., 0., 0.), scale=AXIS_SCALE):
	"""Small isotropic Gaussians centred on the +z axis: a ray from the origin
	along +z hits Gaussian k exactly at its mean with opacity alphas[k]."""
	alphas = np.asarray(alphas, dtype=np.float64)
	gaussians = [
		Gaussian((0., 0., depths[k]), (1., 0., 0., 0.), np.full(3, np.log(scale)),
				 logit(alphas[k]), Emissive(colors[k]))
		for k in range(len(alphas))
	]
	return Scene(gaussians=gaussians, background=background)


def generate_random_axis_scene(rs, n_gaussians, alpha_range=None, background=None):
	"""Axis scene with random opacities, depths in (1, 10) and colours."""
	low, high = alpha_range if alpha_range is not None else (1.01 / 255.0, 1.0 - 1e-4)
	alphas = rs.uniform(low, high, size=n_gaussians)
	depths = rs.uniform(1.0, 10.0, size=n_gaussians)
	colors = rs.uniform(0., 1., size=(n_gaussians, 3))
	if background is None:
		background = rs.uniform(0., 1., size=3)
	return generate_axis_scene(alphas, depths, colors, background)


def generate_occluder_scene(rs, n_behind, occluder_alpha):
	"""One high-opacity occluder in front of `n_behind` random axis Gaussians."""
	alphas = np.concatenate([[occluder_alpha], rs.uniform(0.1, 0.9, size=n_behind)])
	depths = np.concatenate([[1.0], np.sort(rs.uniform(2.0, 10.0, size=n_behind))])
	colors = rs.uniform(0.05, 1., size=(n_behind + 1, 3))
	return generate_axis_scene(alphas, depths, colors, background=rs.uniform(0., 1., size=3))


def ring_cameras(n_views=N_VIEWS, radius=CAMERA_RADIUS, size=IMAGE_SIZE, fov=CAMERA_FOV,
				 fisheye=False):
	cameras = []
	for k in range(n_views):
		phi = 2 * np.pi * k / n_views
		height = 0.5 * radius * np.sin(2 * phi)
		eye = np.array([radius * np.cos(phi), height, radius * np.sin(phi)])
		pose = look_at(eye, np.zeros(3))
		if fisheye:
			cameras.append(FisheyeCamera(pose, size, size, fov))
		else:
			cameras.append(PinholeCamera(pose, size, size, fov))
	return cameras


def generate_toy_scene(random_seed=RANDOM_SEED, n_gaussians=8, size=IMAGE_SIZE):
	"""Ground truth for the toy reconstruction: 8 emissive Gaussians and a
	ring of cameras."""
	scene = generate_random_scene(n_gaussians, random_seed, extent=0.8,
								  log_scale_range=(-1.6, -1.0), alpha_range=(0.5, 0.95))
	return scene.replace(cameras=ring_cameras(size=size))


def generate_relight_scene(random_seed=RANDOM_SEED, n_gaussians=8, size=IMAGE_SIZE):
	"""8 reflective Gaussians lit by 3 point lights. Isotropic reflectance keeps
	every albedo observable whatever the light placement."""
	scene = generate_random_scene(n_gaussians, random_seed, extent=0.8, reflective=True,
								  log_scale_range=(-1.6, -1.0), alpha_range=(0.5, 0.95),
								  reflectance_model='isotropic')
	return scene.replace(lights=point_lights(random_seed), cameras=ring_cameras(size=size))


def point_lights(random_seed=RANDOM_SEED, n_lights=3, radius=3.0, intensity=12.0):
	rs = np.random.RandomState(random_seed + 1)
	lights = []
	for k in range(n_lights):
		lights.append(PointLight(radius * normed_uniform(rs, 3), np.full(3, intensity)))
	return lights


def heldout_lights(random_seed=RANDOM_SEED):
	"""One point light drawn apart from the training lights, for relighting checks."""
	return point_lights(random_seed + HELDOUT_SEED_OFFSET, n_lights=1)


def generate_high_opacity_scene(random_seed=RANDOM_SEED, n_behind=6, occluder_alpha=0.99):
	rs = np.random.RandomState(random_seed)
	camera = PinholeCamera(look_at(np.zeros(3), (0., 0., 1.), up=(0., -1., 0.)), 9, 9, np.pi / 6)
	return generate_occluder_scene(rs, n_behind, occluder_alpha).replace(cameras=[camera])


def initial_guess(target, random_seed=RANDOM_SEED, jitter=0.3):
	"""Random initialisation with the target's Gaussian count and appearance types."""
	rs = np.random.RandomState(random_seed)
	gaussians = []
	for g in target.gaussians:
		mean = g.mean + rs.uniform(-jitter, jitter, size=3)
		log_scales = np.full(3, np.mean(g.log_scales)) + rs.uniform(-0.2, 0.2, size=3)
		if isinstance(g.appearance, Reflective):
			appearance = Reflective(np.full(3, 0.5), g.appearance.normal, g.appearance.model)
		else:
			appearance = Emissive(rs.uniform(0.2, 0.8, size=3))
		gaussians.append(Gaussian(mean, (1., 0., 0., 0.), log_scales, 0.0, appearance))
	return target.replace(gaussians=gaussians)


def render_dataset(scene, cameras=None, mode='sorted', M_f=4096, random_seed=RANDOM_SEED,
				   threads=1):
	cameras = scene.cameras if cameras is None else cameras
	images = [render_image(scene, cam, mode, M_f, random_seed + k, threads) for k, cam in
			  enumerate(cameras)]
	return Dataset(cameras, images)


def random_quaternions(rs, n):
	# scipy returns (x, y, z, w)
	xyzw = Rotation.random(n, random_state=rs).as_quat().reshape(n, 4)
	return np.concatenate([xyzw[:, 3:], xyzw[:, :3]], axis=1)


def normed_uniform(rs, n):
	return normalize(rs.normal(loc=0, scale=10, size=n))


def logit(p):
	return np.log(p / (1 - p))


def normalize(v):
	return v / np.linalg.norm(v)
