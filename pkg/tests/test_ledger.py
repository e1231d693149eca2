from models.db_init import init_ledger
from models.run_models import RunRecord, latest_runs, record_run
from sampling.report import summarize


def _url(tmp_path):
    return f"sqlite:///{tmp_path / 'runs.db'}"


def test_init_ledger_is_cached_per_url(tmp_path):
    url = _url(tmp_path)
    assert init_ledger(url) is init_ledger(url)


def test_record_and_list_runs(tmp_path):
    url = _url(tmp_path)
    report = summarize([], "atss")
    assert record_run(url, "assign", '{"seed": 0}', strategy="atss", seed=0, output_dir="/tmp/out", report=report)
    assert record_run(url, "synth", '{"seed": 1}', seed=1)

    runs = latest_runs(url)
    assert [r.command for r in runs] == ["synth", "assign"]
    assign = runs[1]
    assert isinstance(assign, RunRecord)
    assert assign.strategy == "atss"
    assert assign.config_json == '{"seed": 0}'
    assert assign.num_ground_truths == 0
    assert assign.mean_positives == 0.0
    assert assign.created_at is not None
    assert runs[0].mean_positives is None


def test_limit(tmp_path):
    url = _url(tmp_path)
    for seed in range(5):
        record_run(url, "assign", "{}", strategy="iou", seed=seed)
    assert [r.seed for r in latest_runs(url, limit=2)] == [4, 3]


def test_unreachable_ledger_does_not_raise():
    assert record_run("nosuchdialect://nowhere", "assign", "{}") is False
