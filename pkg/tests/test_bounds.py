import numpy as np
import pytest

from e2f.bounds import (
    BoundInstance,
    check_bound,
    decoder_constants,
    guided_rhs,
    lipschitz_and_condition,
    random_instance,
)
from e2f.events import FrameTimeline
from e2f.sampler import Decoder
from e2f.simulator import FrameSequence, ResidualField


# -- singular values ------------------------------------------------------------

def test_identity_constants():
    lip, kappa = lipschitz_and_condition(np.eye(6))
    assert lip == pytest.approx(1.0, abs=1e-9)
    assert kappa == pytest.approx(1.0, abs=1e-9)
    assert decoder_constants(Decoder.identity()) == (1.0, 1.0)


def test_diagonal_constants():
    lip, kappa = lipschitz_and_condition(np.diag([3.0, 1.0]))
    assert lip == pytest.approx(3.0, abs=1e-8)
    assert kappa == pytest.approx(3.0, abs=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_random_matrix_matches_svd_oracle(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((8, 8)) + 2.0 * np.eye(8)
    lip, kappa = lipschitz_and_condition(a)
    sv = np.linalg.svd(a, compute_uv=False)  # dense oracle
    assert abs(lip - sv[0]) < 1e-6
    assert abs(kappa - sv[0] / sv[-1]) < 1e-6


def test_rank_deficient_rejected():
    a = np.ones((5, 3))
    with pytest.raises(ValueError, match="rank deficient"):
        lipschitz_and_condition(a)


# -- bound check ----------------------------------------------------------------

def exact_instance(frames=4, size=3, contrast=0.2):
    """Constant ground truth, zero residuals, latents decoding to C*V."""
    truth = FrameSequence(np.full((frames, 1, size, size), 0.5),
                          FrameTimeline.uniform(frames, 1.0))
    residuals = ResidualField(np.zeros((frames - 1, 1, size, size)))
    decoder = Decoder.identity()
    latents = contrast * truth.data
    return BoundInstance(decoder, latents, truth, residuals, contrast)


def test_zero_error_instance():
    report = check_bound(exact_instance())
    assert report.lhs == 0.0
    assert report.loss == 0.0
    assert report.epsilon == 0.0
    assert report.holds


def test_single_frame_instance():
    report = check_bound(exact_instance(frames=1))
    assert report.lhs == 0.0
    assert report.rhs >= 0.0
    assert report.holds


@pytest.mark.parametrize("base_seed", [0, 500])
def test_bound_holds_on_random_instances(base_seed):
    for i in range(50):
        report = check_bound(random_instance(base_seed + i))
        assert report.holds, f"violated at seed {base_seed + i}: {report}"


def test_rhs_monotone_in_loss():
    rng = np.random.default_rng(3)
    inst = random_instance(42)
    worse = BoundInstance(inst.decoder,
                          inst.latents + rng.normal(0, 0.5, inst.latents.shape),
                          inst.truth, inst.residuals, inst.contrast)
    a = check_bound(inst)
    b = check_bound(worse)
    if b.loss >= a.loss:
        assert b.rhs >= a.rhs
    else:
        assert b.rhs <= a.rhs


def test_guided_step_never_increases_rhs():
    for i in range(50):
        before, after = guided_rhs(random_instance(9000 + i))
        assert after.rhs <= before.rhs + 1e-12 * max(1.0, before.rhs)
        assert before.holds and after.holds


def test_contrast_must_be_positive():
    inst = exact_instance()
    with pytest.raises(ValueError, match="positive"):
        BoundInstance(inst.decoder, inst.latents, inst.truth,
                      inst.residuals, 0.0)


def test_report_carries_anchoring_note():
    report = check_bound(exact_instance())
    assert "anchor" in report.anchoring
