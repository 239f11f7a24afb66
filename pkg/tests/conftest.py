import numpy as np
import pytest

from survstack.data import SurvivalDataset


def make_dataset(time, event, covariates=None, names=None) -> SurvivalDataset:
    """Tiny dataset constructor for fixtures; ids are i0, i1, ..."""
    time = np.asarray(time, dtype=float)
    n = len(time)
    if covariates is None:
        covariates = np.zeros((n, 1))
        names = ("x0",)
    covariates = np.asarray(covariates, dtype=float)
    if covariates.ndim == 1:
        covariates = covariates[:, None]
    if names is None:
        names = tuple(f"x{j}" for j in range(covariates.shape[1]))
    return SurvivalDataset(
        ids=tuple(f"i{k}" for k in range(n)),
        time=time,
        event=np.asarray(event, dtype=int),
        covariates=covariates,
        covariate_names=names,
    )


@pytest.fixture
def classic_km_fixture():
    """Observed times 1, 2(censored), 3: the survival curve drops to 2/3
    at t=1, stays flat through the censoring, and hits 0 at t=3."""
    return make_dataset([1, 2, 3], [1, 0, 1])
