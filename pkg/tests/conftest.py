import numpy as np
import pytest
from PIL import Image

QUALITY = 95


def _rgb(arr):
    return np.clip(arr, 0, 255).astype(np.uint8)


def make_test_image(kind: str, size: int, rng) -> np.ndarray:
    """Varied content so blocks range from DC-only to full-length spans."""
    yy, xx = np.mgrid[0:size, 0:size]
    if kind == "noise":
        return _rgb(rng.integers(0, 256, (size, size, 3)))
    if kind == "gradient":
        g = (xx + yy) * 255.0 / (2 * size)
        return _rgb(np.stack([g, g[::-1], g.T], axis=2))
    if kind == "sinusoid":
        f = rng.uniform(0.05, 0.45)
        wave = 127 + 120 * np.sin(2 * np.pi * f * xx + rng.uniform(0, np.pi))
        return _rgb(np.stack([wave] * 3, axis=2))
    if kind == "blobs":
        img = np.full((size, size, 3), 90.0)
        for _ in range(12):
            cy, cx = rng.integers(0, size, 2)
            r = rng.integers(size // 16, size // 4)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r ** 2
            img[mask] = rng.integers(0, 256, 3)
        return _rgb(img)
    if kind == "mixed":
        base = make_test_image("sinusoid", size, rng).astype(float)
        return _rgb(base + rng.normal(0, 25, base.shape))
    raise ValueError(kind)


def save_jpeg(arr, path, subsampling=2, quality=QUALITY, **kwargs):
    Image.fromarray(arr, "RGB").save(path, quality=quality,
                                     subsampling=subsampling, **kwargs)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """>= 20 quality-95 4:2:0 256x256 baseline JPEGs with varied content."""
    root = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(2024)
    kinds = ["noise", "gradient", "sinusoid", "blobs", "mixed"]
    for i in range(20):
        arr = make_test_image(kinds[i % len(kinds)], 256, rng)
        save_jpeg(arr, root / f"img{i:02d}.jpg")
    return root


@pytest.fixture(scope="session")
def corpus_files(corpus_dir):
    return sorted(corpus_dir.glob("*.jpg"))


@pytest.fixture(scope="session")
def jpeg_444(tmp_path_factory):
    root = tmp_path_factory.mktemp("extra")
    rng = np.random.default_rng(7)
    path = root / "img444.jpg"
    save_jpeg(make_test_image("blobs", 128, rng), path, subsampling=0)
    return path


@pytest.fixture(scope="session")
def flat_gray16(tmp_path_factory):
    root = tmp_path_factory.mktemp("flat")
    path = root / "gray16.jpg"
    arr = np.full((16, 16, 3), 128, dtype=np.uint8)
    save_jpeg(arr, path, subsampling=2)
    return path


@pytest.fixture(scope="session")
def odd_size_jpeg(tmp_path_factory):
    root = tmp_path_factory.mktemp("odd")
    path = root / "odd.jpg"
    rng = np.random.default_rng(11)
    save_jpeg(make_test_image("blobs", 100, rng)[:75, :100], path, subsampling=2)
    return path


@pytest.fixture(scope="session")
def restart_jpeg(tmp_path_factory):
    root = tmp_path_factory.mktemp("rst")
    path = root / "restart.jpg"
    rng = np.random.default_rng(13)
    # Pillow forwards restart_marker_blocks to libjpeg as MCU rows
    save_jpeg(make_test_image("mixed", 128, rng), path, subsampling=2,
              restart_marker_blocks=4)
    return path


def make_texture_class_image(label: int, size: int, rng) -> np.ndarray:
    """Distinct spatial frequency band (and band density) per class."""
    bands = [(0.02, 0.05), (0.10, 0.16), (0.30, 0.45)]
    lo, hi = bands[label % len(bands)]
    waves = [1, 2, 4][label % len(bands)]
    yy, xx = np.mgrid[0:size, 0:size]
    img = np.zeros((size, size), dtype=float)
    for _ in range(waves):
        f = rng.uniform(lo, hi)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        img += np.sin(2 * np.pi * f * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    img = 127 + (80 / np.sqrt(waves)) * img + rng.normal(0, 2, img.shape)
    return _rgb(np.stack([img] * 3, axis=2))


def make_texture_dataset(root, n_per_class=20, size=64, seed=0, n_classes=3):
    """Class-per-directory JPEG tree in the C101 layout."""
    rng = np.random.default_rng(seed)
    for label in range(n_classes):
        d = root / f"class{label}"
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            arr = make_texture_class_image(label, size, rng)
            save_jpeg(arr, d / f"t{i:03d}.jpg")
    return root
