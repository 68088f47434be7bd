import numpy as np
import pytest
import yaml

from analysis.iv_io import write_campaign
from analysis.synthetic import synth_campaign
from shapes.field import smooth
from shapes.mask import write_placements
from shapes.synthetic import convex_segments, disk_mask, film_array, write_film_array


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def disk_field():
    return smooth(disk_mask(64, 20.0), 3.0)


@pytest.fixture(scope="session")
def convex_fields():
    return [smooth(m, 3.0) for m in convex_segments(10, seed=7)]


def write_run_dir(root, count=35, seed=0, k=3, iv=True, **overrides):
    """Masks, placements, optional IV campaign and probemap.yaml under root."""
    masks = film_array(count, seed)
    write_film_array(masks, root / "masks")
    write_placements(masks, root / "masks" / "placements.csv")
    cfg = {
        "config_version": 1,
        "seed": seed,
        "output_dir": "out",
        "masks": {"glob": "masks/*.pgm", "placements": "masks/placements.csv"},
        "optimizer": {"k": k},
    }
    if iv:
        ids = [m.id for m in masks]
        compositions = {s: i / max(1, len(ids) - 1) for i, s in enumerate(ids)}
        records = synth_campaign(ids, {s: range(k) for s in ids}, compositions, seed=seed)
        write_campaign(records, root / "iv", compositions)
        cfg["analysis"] = {"iv_dir": "iv"}
    for section, values in overrides.items():
        if isinstance(values, dict):
            cfg.setdefault(section, {}).update(values)
        else:
            cfg[section] = values
    path = root / "probemap.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False))
    return path


@pytest.fixture
def make_run_dir(tmp_path):
    def _make(count=35, seed=0, k=3, iv=True, **overrides):
        return write_run_dir(tmp_path, count, seed, k, iv, **overrides)

    return _make
