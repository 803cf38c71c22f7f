import numpy as np
import pytest

from uzoom import dataset, fixtures, geometry


@pytest.fixture(scope="session")
def capture_set():
    """Synthetic capture: close-up is a native view of the master, full shot
    sees the whole master at 1/8 scale."""
    zoom = 8.0
    size = 320
    master = fixtures.noise_texture_rgb(int(zoom * size), int(zoom * size), seed=11)
    center = (master.shape[1] / 2, master.shape[0] / 2)
    closeup = fixtures.render_view(master, 1.0, center, size, size)
    full = fixtures.render_view(master, zoom, center, size, size)
    truth = fixtures.true_transform(1.0, center, zoom, center, size, size)
    return dataset.CaptureSet(
        full=full,
        closeups=[closeup],
        transforms=[truth],
        scales=[geometry.extract_scale(truth)],
    )


@pytest.fixture(scope="session")
def manifest(capture_set, tmp_path_factory):
    out = tmp_path_factory.mktemp("manifest")
    return dataset.build_manifest(capture_set, out, patch_size=192, count=40, seed=5)


@pytest.fixture(scope="session")
def texture_rgb():
    return fixtures.noise_texture_rgb(512, 512, seed=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
