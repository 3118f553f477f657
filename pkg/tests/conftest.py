import pytest

from stressdetect.features import FeatureConfig
from stressdetect.ingest import synth_labeled
from stressdetect.offline import build_artifact, fit
from stressdetect.models.persist import save_model
from stressdetect.word2vec import W2VConfig

# small embeddings keep the end-to-end tests fast
SMALL_W2V = W2VConfig(dim=16, epochs=3, min_count=1)
SMALL_FEATURES = FeatureConfig(w2v=SMALL_W2V)
PINNED_TIME = "2024-01-01T00:00:00+00:00"


@pytest.fixture(scope="session")
def synth_data():
    return synth_labeled(400, seed=11)


@pytest.fixture(scope="session")
def logreg_fit(synth_data):
    return fit(synth_data[:300], "logreg", SMALL_FEATURES, seed=0)


@pytest.fixture(scope="session")
def artifact_path(tmp_path_factory, logreg_fit):
    pipeline, model = logreg_fit
    path = tmp_path_factory.mktemp("artifact") / "model.json"
    save_model(build_artifact(pipeline, model, PINNED_TIME), path)
    return path


# ---------------------------------------------------------------- acceptance report

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = ""
        if rep.skipped and isinstance(rep.longrepr, tuple):
            detail = rep.longrepr[2].removeprefix("Skipped: ")
        elif rep.failed:
            detail = rep.longrepr.reprcrash.message.splitlines()[0] if hasattr(rep.longrepr, "reprcrash") \
                else str(rep.longrepr).splitlines()[-1]
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _CRITERIA[number] = (verdict, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        verdict, title, detail = _CRITERIA[number]
        line = f"criterion {number}: {verdict}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
