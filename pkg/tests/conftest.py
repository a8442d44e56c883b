import numpy as np
import pytest

from pressmat.dataset import Corpus, GridSpec, PressureFrame, SubjectRecord
from pressmat.synthgen import NoiseSpec, generate_corpus

DEFAULT_GRID = GridSpec(rows=8, cols=8, sensor_ceiling=1000.0, frame_rate_hz=1.5)


def make_frame(values, grid=None, subject_id="S01", posture_id=1, frame_index=0):
    values = np.asarray(values, dtype=np.float64)
    if grid is None:
        grid = GridSpec(values.shape[0], values.shape[1], 1000.0, 1.5)
    return PressureFrame(
        grid=grid,
        values=values,
        subject_id=subject_id,
        posture_id=posture_id,
        frame_index=frame_index,
    )


def make_subject(sid="S01", height=1.75, weight=70.0, age=30.0):
    return SubjectRecord(subject_id=sid, height_m=height, weight_kg=weight, age_years=age)


@pytest.fixture
def tiny_corpus():
    """2 subjects x 4 frames on a 4x4 grid, handmade."""
    grid = GridSpec(4, 4, 1000.0, 1.5)
    subjects = {
        "S01": make_subject("S01", 1.7, 60.0),
        "S02": make_subject("S02", 1.8, 90.0, age=None),
    }
    rng = np.random.default_rng(0)
    frames = []
    for sid in subjects:
        for i in range(4):
            frames.append(
                PressureFrame(
                    grid=grid,
                    values=rng.uniform(0, 500, size=(4, 4)),
                    subject_id=sid,
                    posture_id=1,
                    frame_index=i,
                )
            )
    return Corpus(grid=grid, subjects=subjects, frames=tuple(frames))


@pytest.fixture(scope="session")
def synth_corpus():
    """Small deterministic synthetic corpus reused by slower tests."""
    return generate_corpus(
        n_subjects=3,
        frames_per_subject=24,
        postures=("supine", "left"),
        noise=NoiseSpec(multiplicative_sigma=0.05, dropout_prob=0.01, jitter_sigma_cells=0.3),
        grid=GridSpec(16, 32, 1000.0, 1.5),
        seed=11,
    )
