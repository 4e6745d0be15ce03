"""Service-level mobile traffic prediction with a conditional diffusion
model, dual-axis attention denoising, and multimodal environment
conditioning."""

from .catalogs import DEFAULT_POIS, DEFAULT_SERVICES, PoiCatalog, ServiceCatalog
from .dataset import Dataset, load_dataset, save_dataset
from .normalize import Normalizer, fit_normalizer
from .synthetic import SyntheticConfig, generate_synthetic
from .windows import SampleWindow, make_windows

__all__ = [
    "DEFAULT_POIS", "DEFAULT_SERVICES", "PoiCatalog", "ServiceCatalog",
    "Dataset", "load_dataset", "save_dataset",
    "Normalizer", "fit_normalizer",
    "SyntheticConfig", "generate_synthetic",
    "SampleWindow", "make_windows",
]
