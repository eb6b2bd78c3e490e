import numpy as np
import pandas as pd

from app.models.objectives import ObjectiveReport
from app.models.run_store import HISTORY_FILE, RunStore, load_history


def report(iteration):
    return ObjectiveReport(iteration=iteration, F_k=1.0 + iteration, F_omega=0.5, F_pe=2.0, F_sb=2.0,
                           omega_oc=np.array([11.0, 31.0]), omega_sc=np.array([10.0, 30.0]),
                           k2=np.array([0.1, 0.05]))


def test_history_appends_one_row_per_call(tmp_path):
    store = RunStore(str(tmp_path), n_modes=2)
    store.setup()
    store.append_history(report(0))
    first = (tmp_path / HISTORY_FILE).read_text(encoding="utf-8")
    store.append_history(report(1))
    store.append_history(report(2))
    text = (tmp_path / HISTORY_FILE).read_text(encoding="utf-8")
    assert text.startswith(first)
    assert text.count("iter,") == 1
    history = pd.read_csv(tmp_path / HISTORY_FILE)
    assert list(history["iter"]) == [0, 1, 2]
    assert list(history["F_k"]) == [1.0, 2.0, 3.0]
    assert list(history.columns[:5]) == ["iter", "F_k", "F_omega", "F_pe", "F_sb"]
    assert store.history_rows == 3


def test_setup_discards_previous_history(tmp_path):
    old = RunStore(str(tmp_path), n_modes=2)
    old.setup()
    for i in range(4):
        old.append_history(report(i))
    store = RunStore(str(tmp_path), n_modes=2)
    store.setup()
    assert not (tmp_path / HISTORY_FILE).exists()
    store.append_history(report(0))
    history = load_history(str(tmp_path))
    assert len(history) == 1


def test_setup_creates_nested_directory(tmp_path):
    out = tmp_path / "a" / "b"
    store = RunStore(str(out), n_modes=2)
    store.setup()
    assert out.is_dir()
