import numpy as np
import pytest


def synthetic_image(rng, n=48):
    """Edge-rich synthetic test image on [0, 255]: smooth ramp + rectangles."""
    yy, xx = np.mgrid[0:n, 0:n] / n
    img = 100 + 80 * (xx * rng.random() + yy * rng.random())
    for _ in range(12):
        x0, y0 = rng.integers(0, n - 6, 2)
        w, h = rng.integers(4, 18, 2)
        img[y0:y0 + h, x0:x0 + w] = 30 + 200 * rng.random()
    return np.clip(img, 0, 255)


@pytest.fixture
def synth_images():
    rng = np.random.default_rng(42)
    return [synthetic_image(rng) for _ in range(16)]
