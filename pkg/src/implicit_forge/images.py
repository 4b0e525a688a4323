"""PNG round-tripping between files and float64 RGBA arrays in [0, 1]."""

import numpy as np
from PIL import Image


def save_rgba(path, image: np.ndarray) -> None:
    """Write an (H, W, 4) float array in [0, 1] as an 8-bit RGBA PNG."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 4:
        raise ValueError(f"expected an (H, W, 4) array, got {image.shape}")
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGBA").save(path, format="PNG")


def load_rgba(path) -> np.ndarray:
    """Read any PNG as an (H, W, 4) float64 array scaled to [0, 1]."""
    with Image.open(path) as im:
        data = np.asarray(im.convert("RGBA"), dtype=np.float64)
    return data / 255.0


def alpha_mask(image: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Boolean foreground mask: alpha strictly above the threshold."""
    return np.asarray(image)[..., 3] > threshold
