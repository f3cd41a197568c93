import numpy as np
import pytest

from e2f.metrics import compare, mse, ssim


def random_frames(seed, frames=3, channels=1, size=16):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, (frames, channels, size, size))


# -- independent oracles ---------------------------------------------------------

def mse_oracle(a, b):
    total = np.zeros(a.shape[0])
    for f in range(a.shape[0]):
        acc = 0.0
        count = 0
        for c in range(a.shape[1]):
            for y in range(a.shape[2]):
                for x in range(a.shape[3]):
                    acc += (a[f, c, y, x] - b[f, c, y, x]) ** 2
                    count += 1
        total[f] = acc / count
    return total


def ssim_oracle(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, rng_=1.0):
    half = window // 2
    coords = np.arange(window) - half
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = (k1 * rng_) ** 2, (k2 * rng_) ** 2
    out = np.zeros(a.shape[0])
    for f in range(a.shape[0]):
        chans = []
        for c in range(a.shape[1]):
            vals = []
            for cy in range(half, a.shape[2] - half):
                for cx in range(half, a.shape[3] - half):
                    pa = a[f, c, cy - half:cy + half + 1, cx - half:cx + half + 1]
                    pb = b[f, c, cy - half:cy + half + 1, cx - half:cx + half + 1]
                    mu_a = (w * pa).sum()
                    mu_b = (w * pb).sum()
                    va = (w * pa * pa).sum() - mu_a ** 2
                    vb = (w * pb * pb).sum() - mu_b ** 2
                    cov = (w * pa * pb).sum() - mu_a * mu_b
                    vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                                / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
            chans.append(np.mean(vals))
        out[f] = np.mean(chans)
    return out


# -- mse --------------------------------------------------------------------------

def test_mse_self_is_zero():
    a = random_frames(0)
    per_frame, mean = mse(a, a)
    assert not per_frame.any()
    assert mean == 0.0


def test_mse_constant_offset():
    a = np.zeros((2, 1, 4, 4))
    b = np.full((2, 1, 4, 4), 0.5)
    _, mean = mse(a, b)
    assert mean == pytest.approx(0.25)


def test_mse_matches_loop_oracle():
    a, b = random_frames(1), random_frames(2)
    per_frame, _ = mse(a, b)
    np.testing.assert_allclose(per_frame, mse_oracle(a, b), rtol=0, atol=1e-12)


def test_mse_symmetry_and_permutation_invariance():
    a, b = random_frames(3), random_frames(4)
    assert mse(a, b)[1] == mse(b, a)[1]
    rng = np.random.default_rng(5)
    perm = rng.permutation(a[0, 0].size)
    ap = a.reshape(a.shape[0], -1)[:, perm].reshape(a.shape)
    bp = b.reshape(b.shape[0], -1)[:, perm].reshape(b.shape)
    np.testing.assert_allclose(mse(ap, bp)[0], mse(a, b)[0], atol=1e-15)


def test_mse_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        mse(random_frames(0), random_frames(0, size=8))


# -- ssim -------------------------------------------------------------------------

def test_ssim_self_is_one():
    a = random_frames(6)
    per_frame, mean = ssim(a, a)
    np.testing.assert_allclose(per_frame, 1.0, atol=1e-12)
    assert mean == pytest.approx(1.0, abs=1e-12)


def test_ssim_uniform_pair_is_one():
    a = np.full((1, 1, 16, 16), 0.3)
    _, mean = ssim(a, a.copy())
    assert mean == pytest.approx(1.0, abs=1e-12)


def test_ssim_inverted_high_contrast_is_negative():
    yy, xx = np.mgrid[0:24, 0:24]
    checker = ((xx // 3 + yy // 3) % 2).astype(float)
    a = checker[None, None]
    _, mean = ssim(a, 1.0 - a)
    assert mean < 0.0


def test_ssim_matches_loop_oracle():
    a, b = random_frames(7, size=16), random_frames(8, size=16)
    per_frame, _ = ssim(a, b)
    np.testing.assert_allclose(per_frame, ssim_oracle(a, b), rtol=0, atol=1e-12)


def test_ssim_multichannel_averages_channels():
    a = random_frames(9, channels=3)
    b = random_frames(10, channels=3)
    per_frame, _ = ssim(a, b)
    per_chan = [ssim(a[:, c:c + 1], b[:, c:c + 1])[0] for c in range(3)]
    np.testing.assert_allclose(per_frame, np.mean(per_chan, axis=0), atol=1e-12)


def test_ssim_rejects_small_frames():
    with pytest.raises(ValueError, match="at least"):
        ssim(np.zeros((1, 1, 8, 8)), np.zeros((1, 1, 8, 8)))


def test_compare_report():
    a = random_frames(11)
    report = compare(a, a)
    assert report.mse_mean == 0.0
    assert report.ssim_mean == pytest.approx(1.0, abs=1e-12)
