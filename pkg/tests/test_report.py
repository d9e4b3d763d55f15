import json

from argmine.backend import MockBackend, mock_embed
from argmine.data import CorpusFile, load_corpus
from argmine.metrics import evaluate_detection
from argmine.pipeline import JobSpec, ListSink, run_batch
from argmine.prompting import PromptVariant, Task
from argmine.report import (
    EvalGrid,
    grid_to_csv,
    render_grid_text,
    render_report_text,
    report_to_dict,
    run_table,
    write_grid_files,
    write_report_files,
)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def detection_report(pipeline_corpus):
    sink = ListSink()
    run_batch(MockBackend(), pipeline_corpus,
              JobSpec(tasks=frozenset({Task.DETECT})), sink)
    return evaluate_detection(pipeline_corpus, [r for _, r in sink.records])


class TestRunTable:
    def test_grid_shape_matches_rows_and_columns(self, fixtures_dir):
        datasets = {
            "ukp": load_corpus(CorpusFile.at(fixtures_dir / "ukp.csv", schema="ukp")).instances,
            "debate": load_corpus(CorpusFile.at(fixtures_dir / "debate.csv", schema="debate")).instances,
        }
        grid = run_table([("mock", MockBackend())], datasets, Task.DETECT)
        assert grid.columns == ("ukp", "debate")
        assert grid.row_labels == (("mock", "atn"), ("mock", "no-atn"))
        for row in grid.cells:
            assert len(row) == 2
            for value in row:
                assert value is None or 0.0 <= value <= 1.0

    def test_stance_table(self, fixtures_dir):
        datasets = {
            "ibm-arg": load_corpus(
                CorpusFile.at(fixtures_dir / "ibm_arg.csv", schema="ibm-arg")
            ).instances,
        }
        grid = run_table([("mock", MockBackend())], datasets, Task.STANCE,
                         variants=(PromptVariant.WITH_ATN,))
        assert grid.row_labels == (("mock", "atn"),)
        assert grid.cells[0][0] is not None

    def test_extraction_table_uses_embedder(self, fixtures_dir):
        datasets = {
            "cte": load_corpus(CorpusFile.at(fixtures_dir / "cte.csv", schema="cte")).instances,
        }
        grid = run_table([("mock", MockBackend())], datasets, Task.EXTRACT,
                         embedder=mock_embed)
        assert len(grid.row_labels) == 1  # extraction has a single variant
        assert grid.cells[0][0] is not None


class TestGridRendering:
    GRID = EvalGrid(
        row_labels=(("llama", "atn"), ("llama", "no-atn")),
        columns=("ukp", "gpt", "debate"),
        cells=((0.824, 0.833, 0.78), (0.736, 0.779, None)),
    )

    def test_text_layout(self):
        text = render_grid_text(self.GRID)
        lines = text.splitlines()
        assert lines[0].startswith("Model")
        assert lines[0].split()[1:] == ["ukp", "gpt", "debate"]
        assert lines[1].split() == ["F1", "F1", "F1"]
        assert "82.4" in lines[2]
        assert "----" in lines[3]  # missing cell marker

    def test_csv(self):
        rows = grid_to_csv(self.GRID).splitlines()
        assert rows[0] == "model,variant,ukp,gpt,debate"
        assert rows[1].startswith("llama,atn,0.824")

    def test_write_grid_files(self, tmp_path):
        written = write_grid_files(self.GRID, tmp_path / "grid")
        assert set(written) == {"json", "text", "csv", "png"}
        assert written["png"].read_bytes()[:8] == PNG_MAGIC
        data = json.loads(written["json"].read_text())
        assert data["columns"] == ["ukp", "gpt", "debate"]


class TestReportFiles:
    def test_render_text(self, pipeline_corpus):
        report = detection_report(pipeline_corpus)
        text = render_report_text(report)
        assert "task: detect" in text
        assert "confusion" in text
        assert "accuracy by argument_type" in text

    def test_report_dict_round_trips_to_json(self, pipeline_corpus):
        report = detection_report(pipeline_corpus)
        data = json.loads(json.dumps(report_to_dict(report)))
        assert data["task"] == "detect"
        assert 0.0 <= data["f1"] <= 1.0
        assert data["confusion"]["classes"] == ["NotArgument", "Argument"]

    def test_figures_written_alongside_delimited_output(self, tmp_path, pipeline_corpus):
        report = detection_report(pipeline_corpus)
        written = write_report_files(report, tmp_path / "report.json")
        assert set(written) == {"json", "text", "confusion_csv",
                                "confusion_png", "breakdown_png"}
        for key in ("confusion_png", "breakdown_png"):
            assert written[key].read_bytes()[:8] == PNG_MAGIC
        csv_text = written["confusion_csv"].read_text()
        assert csv_text.splitlines()[0] == "gold\\pred,NotArgument,Argument"

    def test_figures_can_be_disabled(self, tmp_path, pipeline_corpus):
        report = detection_report(pipeline_corpus)
        written = write_report_files(report, tmp_path / "report", figures=False)
        assert set(written) == {"json", "text", "confusion_csv"}
