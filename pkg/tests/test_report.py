from prostmri.metrics import ConfusionMatrix, summarize
from prostmri.pipeline import RunReport
from prostmri.readers import fleiss_kappa, load_ratings, reader_metrics
from prostmri.report import (RESULT_HEADER, read_csv_table, read_markdown_table, render_reader_study,
                             render_report, render_results)

from conftest import reader_study_csv


def test_empty_pipeline_list_header_only(tmp_path):
    render_results([], tmp_path / "results")
    assert read_csv_table(tmp_path / "results.csv") == (RESULT_HEADER, [])
    assert read_markdown_table(tmp_path / "results.md") == (RESULT_HEADER, [])
    files = render_report(RunReport([], {}, {}), tmp_path / "full")
    assert (tmp_path / "full" / "figures" / "roc_test.png") in files
    assert read_csv_table(tmp_path / "full" / "thresholds.csv")[1] == []


def test_reader_tables(tmp_path):
    rs = load_ratings(reader_study_csv(tmp_path / "r.csv"))
    table = reader_metrics(rs)
    kappa = fleiss_kappa(rs, n_bootstrap=1000)
    ai = summarize(ConfusionMatrix(10, 2, 1, 20))
    render_reader_study(table, kappa, tmp_path / "rs", ai, "HOG + SVM")
    header, rows = read_markdown_table(tmp_path / "rs" / "readers.md")
    assert header == ["Radiologist", "Sens", "Spec", "PPV", "NPV", "Accuracy"]
    assert rows[0] == ["Rad1", "50%", "100%", "100%", "77.8%", "81.8%"]
    assert rows[-1][0] == "Mean" and rows[-1][1] == "67.5%"
    header, rows = read_markdown_table(tmp_path / "rs" / "ai_vs_readers.md")
    assert header == ["Metric", "HOG + SVM", "Radiologists"]
    assert rows[0] == ["Sensitivity", "95.2%", "67.5%"]
    _, krows = read_csv_table(tmp_path / "rs" / "kappa.csv")
    assert float(krows[0][0]) == kappa.kappa
    assert (tmp_path / "rs" / "figures" / "readers.png").stat().st_size > 0
