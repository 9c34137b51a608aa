import numpy as np
import pytest

from segkit.toy import ToySpec, generate_toy


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_toy():
    """Six 16x16 images with up to two small shapes each."""
    spec = ToySpec(
        n_images=6,
        image_size=(16, 16),
        class_ids=(1, 2),
        spawn_probs=(0.8, 0.5),
        shapes_per_image=(1, 2),
        shape_scale=(0.2, 0.4),
        noise_level=4.0,
        seed=99,
    )
    return generate_toy(spec)


CSV_TEXT = """ImageId,EncodedPixels,ClassId,Height,Width
img_a,1 3,4,4,3
img_a,8 2,7,4,3
img_b,2 2 9 1,31,4,4
"""


@pytest.fixture
def sample_csv(tmp_path):
    path = tmp_path / "annotations.csv"
    path.write_text(CSV_TEXT)
    return path
