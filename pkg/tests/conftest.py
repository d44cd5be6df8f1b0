import importlib.util
import os
import sys

import pytest

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(REPO_ROOT, "data")


def _fetch_module():
    spec = importlib.util.spec_from_file_location(
        "fetch_uci", os.path.join(REPO_ROOT, "scripts", "fetch_uci.py")
    )
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


@pytest.fixture(scope="session")
def data_dir():
    """Materialize the offline-capable datasets (wine, waveform) once.

    glass and vehicle require network access via scripts/fetch_uci.py;
    tests that need them skip when the files are absent.
    """
    fetch = _fetch_module()
    os.makedirs(DATA_DIR, exist_ok=True)
    wine = os.path.join(DATA_DIR, "wine.csv")
    if not os.path.exists(wine):
        rows = fetch.wine_rows_from_sklearn()
        fetch.validate("wine", rows)
        fetch.write_rows(rows, wine)
    waveform = os.path.join(DATA_DIR, "waveform.csv")
    if not os.path.exists(waveform):
        fetch.get_waveform(DATA_DIR, generate=True, seed=20240817)
    return DATA_DIR


def require_dataset(directory, name):
    path = os.path.join(directory, f"{name}.csv")
    if not os.path.exists(path):
        pytest.skip(
            f"{name}.csv is absent; run scripts/fetch_uci.py {name} "
            "(needs network access to the UCI repository)"
        )
    return path
