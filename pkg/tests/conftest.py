"""Shared fixtures: a small, fast dataset configuration and a generated tree."""

import pytest

from mvforge.scene_synth import GeneratorConfig


def small_config(**overrides) -> GeneratorConfig:
    """A dataset sized for tests: tiny scenes, single-digit crowds."""
    base = dict(
        scenes=2,
        frames_per_scene=2,
        views=4,
        count_min=6,
        count_max=12,
        capacity=5,
        separation=0.25,
        scene_size_x=18.0,
        scene_size_y=14.0,
        cell_size=0.5,
        seed=1234,
    )
    base.update(overrides)
    return GeneratorConfig(**base)


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """A written dataset shared by read-only tests."""
    from mvforge.annotate import write_dataset
    from mvforge.scene_synth import generate_dataset

    out = tmp_path_factory.mktemp("dataset")
    plan = generate_dataset(small_config())
    write_dataset(plan, out, version="test")
    return out
