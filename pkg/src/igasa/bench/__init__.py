from .io import load_cloud, load_transform, save_cloud, save_transform
from .pipeline import PipelineConfig, RegistrationReport, register_pair
from .ransac import ransac, ransac_baseline
from .scene import Scene, SceneConfig, generate_scene
from .suite import BenchReport, SuiteConfig, run_benchmark, run_suite

__all__ = [
    "BenchReport", "PipelineConfig", "RegistrationReport", "Scene", "SceneConfig", "SuiteConfig",
    "generate_scene", "load_cloud", "load_transform", "ransac", "ransac_baseline",
    "register_pair", "run_benchmark", "run_suite", "save_cloud", "save_transform",
]
