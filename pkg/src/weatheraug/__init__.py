"""Physically-based rain and fog augmentation for images with metric depth."""

from .compositor import (FogParams, RainParams, augment_frame, foglike_attenuation, render_fog,
                         restore_luminosity)
from .envmap import EnvironmentMap, estimate_environment
from .imgcore import (CameraRig, DepthMap, LinearImage, kitti_rig, load_calibration, load_depth,
                      load_image, save_image)
from .kernels import BACKEND
from .simulator import SimVolume, sample_drops, project_streaks
from .streaks import load_streak_db, procedural_streak_db

__version__ = "0.1.0"
