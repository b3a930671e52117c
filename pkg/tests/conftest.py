import numpy as np
import pytest

from mvkc.data import KernelMatrix, MultiViewDataset, ViewMask, apply_mask


def random_psd(rng, n, rank=None):
    rank = rank or n
    X = rng.normal(size=(n, rank))
    return X @ X.T


def random_masked_dataset(seed, n=8, views=3, rank=4):
    """Small dataset with random PSD truth kernels and random masks that
    keep every sample covered and every view at >= rank known points."""
    rng = np.random.default_rng(seed)
    truth = [KernelMatrix(random_psd(rng, n, rank)) for _ in range(views)]
    masks = []
    for v in range(views):
        keep = max(rank + 2, n - 2)
        known = np.sort(rng.choice(n, size=keep, replace=False))
        masks.append(ViewMask(n, tuple(int(i) for i in known)))
    # guarantee coverage
    masks[0] = ViewMask.full(n)
    kernels = tuple(apply_mask(T, mask) for T, mask in zip(truth, masks))
    return MultiViewDataset(
        kernels=kernels, masks=tuple(masks), truth=tuple(truth)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
