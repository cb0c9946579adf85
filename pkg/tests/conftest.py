import numpy as np
import pytest

from prostmri.data import SampleRef, SampleSet
from prostmri.demo import make_textured_dataset
from prostmri.features import write_embeddings


def make_sampleset(n_pos, n_neg, prefix="s"):
    refs = [SampleRef(f"{prefix}{i:04d}", f"/nonexistent/{i}.png", 1 if i < n_pos else 0)
            for i in range(n_pos + n_neg)]
    return SampleSet(tuple(refs))


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """30 + 30 textured images."""
    return make_textured_dataset(tmp_path_factory.mktemp("small") / "data", 30, seed=1)


@pytest.fixture(scope="session")
def small_embeddings(small_dataset, tmp_path_factory):
    """Class-shifted 16-d Gaussian embeddings keyed like the small dataset."""
    from prostmri.data import load_manifest

    s = load_manifest(small_dataset)
    rng = np.random.default_rng(5)
    vecs = {r.id: rng.normal(size=16) + 0.8 * r.label for r in s}
    path = tmp_path_factory.mktemp("emb") / "emb.csv"
    write_embeddings(path, vecs)
    return path


# per-reader (TP, FN, TN, FP) on 8 positive / 14 negative cases
READER_COUNTS = {"Rad1": (4, 4, 14, 0), "Rad2": (5, 3, 14, 0), "Rad3": (4, 4, 13, 1),
                 "Rad4": (8, 0, 9, 5), "Rad5": (6, 2, 14, 0)}


def reader_study_csv(path):
    truth = [1] * 8 + [0] * 14
    cols = {}
    for rid, (tp, fn, tn, fp) in READER_COUNTS.items():
        cols[rid] = [1] * tp + [0] * fn + [0] * tn + [1] * fp
    lines = ["case_id,truth," + ",".join(cols)]
    for i, t in enumerate(truth):
        lines.append(f"c{i:02d},{t}," + ",".join(str(cols[r][i]) for r in cols))
    path.write_text("\n".join(lines) + "\n")
    return path


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Record PASS/FAIL for one acceptance criterion: ``criterion(n, title)``."""
    state = {}

    def register(n, title):
        state["n"], state["title"] = n, title

    yield register
    rep = getattr(request.node, "rep_call", None)
    if "n" in state:
        ok = rep is not None and rep.passed
        ACCEPTANCE_LINES[state["n"]] = f"criterion {state['n']:>2}: {'PASS' if ok else 'FAIL'}  {state['title']}"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
