import numpy as np
import pytest

from radiance.dataset import SweepConfig, run_sweep, load_dataset


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Small two-room sweep shared by dataset/trainer/cli tests."""
    out = tmp_path_factory.mktemp("tinydata")
    cfg = SweepConfig(
        rooms=("room1", "lshape"),
        frequencies=(28e9,),
        upas=((4, 4),),
        grid_n=32,
        bs_positions=tuple((float(x), float(y))
                           for x in (2.03125, 4.84375, 7.96875, 3.59375)
                           for y in (1.71875, 4.21875, 3.28125, 2.96875)),
        seed=7,
    )
    manifest = run_sweep(cfg, out)
    samples, _ = load_dataset(out)
    return {"dir": out, "manifest": manifest, "samples": samples, "config": cfg}


@pytest.fixture(scope="session")
def task_dataset(tmp_path_factory):
    """All five rooms at four BS positions each; supports the task-1 split."""
    out = tmp_path_factory.mktemp("taskdata")
    cfg = SweepConfig(
        rooms=("room1", "room2", "room3", "room4", "lshape"),
        frequencies=(28e9,),
        upas=((4, 4),),
        grid_n=32,
        bs_positions=((2.03125, 1.71875), (4.84375, 4.21875),
                      (7.96875, 3.28125), (3.59375, 2.96875)),
        seed=11,
    )
    manifest = run_sweep(cfg, out)
    samples, _ = load_dataset(out)
    return {"dir": out, "manifest": manifest, "samples": samples, "config": cfg}


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
