from .sampler import fip_direction, fip_step, geodesic_direction, geodesic_step, sample_geodesic_path, sample_path
from .persistence import load_path, save_path
