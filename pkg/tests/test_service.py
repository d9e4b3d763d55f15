import json
import threading
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from argmine.backend import MockBackend
from argmine.cli import main
from argmine.service import JobStore, create_app
from argmine.pipeline import JobSpec

FIXTURES = Path(__file__).parent / "fixtures"
GMO_TEXT = ("Glyphosate is a chemical in GMOs and Glyphosate is bad for you, "
            "therefore GMOs are bad for you.")


@pytest.fixture
def client(tmp_path):
    app = create_app(MockBackend(), job_dir=tmp_path / "jobs")
    with TestClient(app) as test_client:
        yield test_client


def wait_for_job(client, job_id, timeout=15.0) -> dict:
    deadline = time.time() + timeout
    while time.time() < deadline:
        body = client.get(f"/jobs/{job_id}").json()
        if body["state"] in ("Done", "Failed"):
            return body
        time.sleep(0.05)
    raise AssertionError(f"job {job_id} did not finish: {body}")


class TestSyncEndpoints:
    def test_detect(self, client):
        response = client.post("/detect", json={"text": GMO_TEXT})
        assert response.status_code == 200
        assert response.json() == {"label": "Argument"}

    def test_detect_non_argument(self, client):
        response = client.post("/detect", json={"text": "The sky is blue."})
        assert response.json() == {"label": "NotArgument"}

    def test_extract(self, client):
        response = client.post("/extract", json={"text": GMO_TEXT})
        assert response.status_code == 200
        assert response.json() == {"topic": "Glyphosate", "is_no_topic": False}

    def test_stance(self, client):
        response = client.post("/stance", json={"text": GMO_TEXT, "topic": "GMOs"})
        assert response.status_code == 200
        assert response.json() == {"stance": "Against"}

    def test_stance_without_topic_is_400(self, client):
        assert client.post("/stance", json={"text": GMO_TEXT}).status_code == 400
        assert client.post("/stance", json={"text": GMO_TEXT, "topic": "  "}).status_code == 400

    def test_empty_text_is_400(self, client):
        assert client.post("/detect", json={"text": "   "}).status_code == 400

    def test_malformed_body_is_400(self, client):
        assert client.post("/detect", json={"wrong": "field"}).status_code == 400

    def test_analyze_full_record(self, client):
        response = client.post("/analyze", json={"text": GMO_TEXT})
        assert response.status_code == 200
        body = response.json()
        assert body["detection"] == "Argument"
        assert body["status"] == "succeeded"
        assert set(body["raw_responses"]) == {"detect", "extract", "stance"}

    def test_analyze_with_provided_topic(self, client):
        response = client.post("/analyze", json={"text": GMO_TEXT, "topic": "GMOs"})
        body = response.json()
        # stance is anchored to the supplied topic; the topic field still
        # reports what extraction found
        assert body["stance"] == "Against"
        assert body["topic"] == "Glyphosate"

    def test_analyze_stance_anchor_fills_topic_when_extraction_abstains(self, client):
        # lowercase text: the mock extractor abstains, so the stance anchor
        # lands in the topic field and the record stays consistent
        response = client.post("/analyze", json={
            "text": "school uniforms are good because they reduce bullying.",
            "topic": "school uniforms",
        })
        body = response.json()
        assert body["stance"] == "Favor"
        assert body["topic"] == "school uniforms"

    def test_backend_failure_is_502(self, tmp_path):
        from argmine.backend import TransportError

        class DeadBackend(MockBackend):
            def complete(self, prompt):
                raise TransportError("endpoint unreachable")

        app = create_app(DeadBackend(), job_dir=tmp_path / "jobs")
        with TestClient(app) as client:
            response = client.post("/detect", json={"text": "hello there"})
        assert response.status_code == 502


class TestJobs:
    def test_unknown_job_is_404(self, client):
        assert client.get("/jobs/nope").status_code == 404
        assert client.get("/jobs/nope/results").status_code == 404

    def test_upload_run_download(self, client):
        with open(FIXTURES / "pipeline12.csv", "rb") as fh:
            response = client.post(
                "/jobs",
                files={"file": ("pipeline12.csv", fh, "text/csv")},
                data={"tasks": "detect,extract,stance", "variant": "atn",
                      "topic_source": "extract"},
            )
        assert response.status_code == 200
        job_id = response.json()["job_id"]

        status = wait_for_job(client, job_id)
        assert status["state"] == "Done"
        assert status["counts"] == {"total": 12, "done": 12, "failed": 0}
        assert status["created_at"] and status["finished_at"]

        results = client.get(f"/jobs/{job_id}/results")
        assert results.status_code == 200
        lines = [json.loads(line) for line in results.text.splitlines()]
        assert len(lines) == 12
        assert lines[0]["id"] == "d01"

    def test_results_not_ready_is_404(self, client, tmp_path):
        # submit, then immediately ask for results of a brand-new queued job id
        with open(FIXTURES / "pipeline12.csv", "rb") as fh:
            job_id = client.post(
                "/jobs", files={"file": ("input.csv", fh, "text/csv")},
            ).json()["job_id"]
        response = client.get(f"/jobs/{job_id}/results")
        assert response.status_code in (200, 404)  # 404 unless already done
        wait_for_job(client, job_id)

    def test_bad_spec_is_400(self, client):
        with open(FIXTURES / "pipeline12.csv", "rb") as fh:
            response = client.post(
                "/jobs",
                files={"file": ("input.csv", fh, "text/csv")},
                data={"tasks": "stance", "topic_source": "extract"},
            )
        assert response.status_code == 400

    def test_matches_cli_output_bytes(self, client, tmp_path):
        with open(FIXTURES / "pipeline12.csv", "rb") as fh:
            job_id = client.post(
                "/jobs",
                files={"file": ("pipeline12.csv", fh, "text/csv")},
                data={"tasks": "detect,extract,stance", "variant": "atn",
                      "topic_source": "extract"},
            ).json()["job_id"]
        wait_for_job(client, job_id)
        http_bytes = client.get(f"/jobs/{job_id}/results").content

        cli_out = tmp_path / "cli.jsonl"
        assert main(["--backend", "mock", "analyze",
                     "--in", str(FIXTURES / "pipeline12.csv"),
                     "--out", str(cli_out)]) == 0
        assert cli_out.read_bytes() == http_bytes

    def test_queue_full_is_503(self, tmp_path):
        release = threading.Event()

        class BlockingBackend(MockBackend):
            def complete(self, prompt):
                release.wait(timeout=30)
                return super().complete(prompt)

        app = create_app(BlockingBackend(), job_dir=tmp_path / "jobs", queue_size=1)
        with TestClient(app) as client:
            codes = []
            for _ in range(3):
                with open(FIXTURES / "pipeline12.csv", "rb") as fh:
                    response = client.post(
                        "/jobs", files={"file": ("input.csv", fh, "text/csv")}
                    )
                codes.append(response.status_code)
                time.sleep(0.1)
            release.set()
        # first job occupies the worker, second fills the queue, third bounces
        assert codes[0] == 200
        assert 503 in codes

    def test_state_machine_rejects_illegal_transitions(self, tmp_path):
        store = JobStore(tmp_path / "jobs")
        job = store.create(JobSpec(), "input.csv", b"id,text\n", "canonical")
        with pytest.raises(ValueError):
            store.transition(job, "Done")  # Queued -> Done is not allowed
        store.transition(job, "Running")
        store.transition(job, "Done")
        with pytest.raises(ValueError):
            store.transition(job, "Running")


class TestRecovery:
    def test_interrupted_job_resumes_from_checkpoint(self, tmp_path, fixtures_dir):
        job_dir = tmp_path / "jobs"
        store = JobStore(job_dir)
        payload = (fixtures_dir / "pipeline12.csv").read_bytes()
        job = store.create(JobSpec(), "pipeline12.csv", payload, "canonical")
        # simulate a crash mid-run: state Running, 5 instances already done
        store.transition(job, "Running")
        done_ids = [f"d{i:02d}" for i in range(1, 6)]
        store.checkpoint_path(job.id).write_text(json.dumps({
            "done_ids": done_ids, "succeeded": 5, "partial": 0, "failed": 0,
        }))
        results = store.results_path(job.id)
        results.write_text("".join(
            json.dumps({"id": i}) + "\n" for i in done_ids
        ))

        app = create_app(MockBackend(), job_dir=job_dir)
        with TestClient(app) as client:
            status = wait_for_job(client, job.id)
            body = client.get(f"/jobs/{job.id}/results")
        assert status["state"] == "Done"
        assert status["counts"]["total"] == 12
        lines = [json.loads(line) for line in body.text.splitlines()]
        assert len(lines) == 12
        assert len({line["id"] for line in lines}) == 12
