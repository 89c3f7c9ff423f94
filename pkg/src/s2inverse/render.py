"""Equal-area Mollweide rendering of sphere maps to binary PPM images."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from matplotlib import colormaps
from matplotlib.colors import Normalize

from .mapio import write_map
from .sphere import SphGrid, SphMap

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)
BACKGROUND = np.array([255, 255, 255], dtype=np.uint8)


def mollweide_lookup(grid: SphGrid, width: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(inside, ring, column) for every image pixel of a width x width//2 raster."""
    height = width // 2
    x = ((np.arange(width) + 0.5) / width * 4.0 - 2.0) * SQRT2
    y = (1.0 - (np.arange(height) + 0.5) / height * 2.0) * SQRT2
    xx, yy = np.meshgrid(x, y)
    inside = xx ** 2 / 8.0 + yy ** 2 / 2.0 <= 1.0

    aux = np.arcsin(np.clip(yy / SQRT2, -1.0, 1.0))
    latitude = np.arcsin(np.clip((2.0 * aux + np.sin(2.0 * aux)) / np.pi, -1.0, 1.0))
    cos_aux = np.cos(aux)
    longitude = np.divide(np.pi * xx, 2.0 * SQRT2 * cos_aux, out=np.zeros_like(xx), where=cos_aux > 0.0)

    colatitude = 0.5 * np.pi - latitude
    midpoints = 0.5 * (grid.thetas[1:] + grid.thetas[:-1])
    ring = np.searchsorted(midpoints, colatitude)
    column = np.rint(np.mod(longitude, 2.0 * np.pi) / grid.delta_phi).astype(np.int64) % grid.n_phi
    return inside, ring, column


def render_mollweide(
    sph_map: SphMap,
    out_path: Union[str, Path],
    vmin: Optional[float] = None,
    vmax: Optional[float] = None,
    width: int = 512,
    cmap: str = "viridis",
) -> np.ndarray:
    """Write a P6 image (and the source map as S2MAP next to it); return the RGB raster."""
    values = sph_map.values
    values = np.abs(values) if np.iscomplexobj(values) else values.astype(np.float64)
    finite = values[np.isfinite(values)]
    low = vmin if vmin is not None else (float(finite.min()) if finite.size else 0.0)
    high = vmax if vmax is not None else (float(finite.max()) if finite.size else 1.0)

    inside, ring, column = mollweide_lookup(sph_map.grid, width)
    sampled = values[ring, column]
    colors = colormaps[cmap](Normalize(vmin=low, vmax=high, clip=True)(sampled), bytes=True)[..., :3]
    image = np.where((inside & np.isfinite(sampled))[..., None], colors, BACKGROUND).astype(np.uint8)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    height = image.shape[0]
    with open(out_path, "wb") as file:
        file.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        file.write(image.tobytes())
    write_map(out_path.with_suffix(".s2map"), sph_map)
    logger.debug("rendered %s (%dx%d, range [%.4g, %.4g])", out_path, width, height, low, high)
    return image


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    """Read back a P6 image written by :func:`render_mollweide`."""
    data = Path(path).read_bytes()
    magic, dims, depth, payload = data.split(b"\n", 3)
    if magic != b"P6" or depth != b"255":
        raise ValueError(f"'{path}' is not an 8-bit P6 image.")
    width, height = (int(v) for v in dims.split())
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
