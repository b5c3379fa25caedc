import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from nudgelab.models import build_model  # noqa: E402


@pytest.fixture(scope="session")
def ac_weak_64():
    return build_model("ac_weak", 64)


@pytest.fixture(scope="session")
def nse_weak_16():
    return build_model("nse_weak", 16)


@pytest.fixture(scope="session")
def all_models():
    return [build_model("ac_weak", 16), build_model("ac_strong", 16),
            build_model("nse_weak", 16), build_model("nse_strong", 16),
            build_model("qg", 16), build_model("mhd", 16)]


def assert_close(a, b, tol, what=""):
    err = np.max(np.abs(np.asarray(a) - np.asarray(b)))
    assert err <= tol, "%s: max abs error %.3e > %.1e" % (what, err, tol)
