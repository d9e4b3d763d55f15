import json
import logging
import threading
import time

import httpx
import pytest

from argmine.backend import (
    AuthError,
    BackendConfig,
    BadResponseError,
    HttpBackend,
    MockBackend,
    TransportError,
    chat_request_body,
    mock_complete,
    mock_embed,
    mock_generate,
)
from argmine.core import split_sentences
from argmine.prompting import (
    build_cte_prompt,
    build_detection_prompt,
    build_generation_prompt,
    build_stance_prompt,
)

CONFIG = BackendConfig(endpoint_url="http://fixture.test/v1", model_id="fixture-model")


def make_backend(handler, config=CONFIG):
    return HttpBackend(config, transport=httpx.MockTransport(handler),
                       sleeper=lambda _: None)


class TestConfig:
    def test_defaults(self):
        assert CONFIG.temperature == 0.0
        assert CONFIG.max_retries == 3
        assert CONFIG.max_concurrent == 4

    @pytest.mark.parametrize("kwargs", [
        {"temperature": -0.1},
        {"max_retries": -1},
        {"max_concurrent": 0},
    ])
    def test_invalid_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            BackendConfig(endpoint_url="http://x", model_id="m", **kwargs)


class TestWireFormat:
    def test_recorded_fixture_round_trip(self, chat_fixture):
        expected = json.dumps(chat_fixture["request"], ensure_ascii=False,
                              separators=(",", ":")).encode("utf-8")
        seen = []

        def handler(request: httpx.Request) -> httpx.Response:
            seen.append(request.content)
            return httpx.Response(200, json=chat_fixture["response"])

        backend = make_backend(handler)
        reply = backend.complete_raw(
            "You classify colors.",
            "Name the color of a clear daytime sky in one word.",
        )
        assert reply == "Blue."
        assert seen[0] == expected

    def test_payload_has_exactly_three_fields_in_order(self, chat_fixture):
        body = chat_request_body(CONFIG, "sys", "usr")
        payload = json.loads(body)
        assert list(payload.keys()) == ["model", "messages", "temperature"]
        assert [m["role"] for m in payload["messages"]] == ["system", "user"]

    def test_payload_byte_stable(self):
        a = chat_request_body(CONFIG, "same system", "same user")
        b = chat_request_body(CONFIG, "same system", "same user")
        assert a == b
        seen = []

        def handler(request):
            seen.append(request.content)
            return httpx.Response(200, json={
                "choices": [{"message": {"role": "assistant", "content": "ok"}}]
            })

        backend = make_backend(handler)
        prompt = build_detection_prompt("Recycling helps because it reduces waste.")
        backend.complete(prompt)
        backend.complete(prompt)
        assert seen[0] == seen[1]


class TestRetries:
    def test_auth_error_never_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(401, json={"error": "bad key"})

        backend = make_backend(handler)
        with pytest.raises(AuthError):
            backend.complete_raw("s", "u")
        assert len(calls) == 1

    def test_retry_then_success(self, caplog):
        statuses = iter([503, 503, 200])

        def handler(request):
            status = next(statuses)
            if status == 200:
                return httpx.Response(200, json={
                    "choices": [{"message": {"role": "assistant", "content": "fine"}}]
                })
            return httpx.Response(status)

        backend = make_backend(handler)
        with caplog.at_level(logging.WARNING, logger="argmine.backend"):
            assert backend.complete_raw("s", "u") == "fine"
        retries = [r for r in caplog.records if "retry" in r.getMessage()]
        assert len(retries) == 2

    def test_retries_exhausted(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(503)

        config = BackendConfig(endpoint_url="http://x/v1", model_id="m", max_retries=1)
        backend = make_backend(handler, config)
        with pytest.raises(TransportError):
            backend.complete_raw("s", "u")
        assert len(calls) == 2  # first try + one retry

    def test_transport_errors_retried(self):
        attempts = []

        def handler(request):
            attempts.append(1)
            if len(attempts) < 2:
                raise httpx.ConnectError("refused")
            return httpx.Response(200, json={
                "choices": [{"message": {"role": "assistant", "content": "after retry"}}]
            })

        backend = make_backend(handler)
        assert backend.complete_raw("s", "u") == "after retry"

    def test_malformed_body(self):
        backend = make_backend(lambda r: httpx.Response(200, json={"nope": 1}))
        with pytest.raises(BadResponseError):
            backend.complete_raw("s", "u")


class TestConcurrencyCap:
    def test_in_flight_never_exceeds_max_concurrent(self):
        lock = threading.Lock()
        in_flight = {"now": 0, "max": 0}

        def handler(request):
            with lock:
                in_flight["now"] += 1
                in_flight["max"] = max(in_flight["max"], in_flight["now"])
            time.sleep(0.02)
            with lock:
                in_flight["now"] -= 1
            return httpx.Response(200, json={
                "choices": [{"message": {"role": "assistant", "content": "ok"}}]
            })

        config = BackendConfig(endpoint_url="http://x/v1", model_id="m", max_concurrent=2)
        backend = make_backend(handler, config)
        threads = [
            threading.Thread(target=backend.complete_raw, args=("s", f"u{i}"))
            for i in range(8)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert in_flight["max"] <= 2


class TestEmbeddings:
    def test_recorded_fixture(self, embeddings_fixture):
        expected = json.dumps(embeddings_fixture["request"],
                              ensure_ascii=False, separators=(",", ":")).encode()
        seen = []

        def handler(request):
            seen.append(request.content)
            return httpx.Response(200, json=embeddings_fixture["response"])

        config = BackendConfig(endpoint_url="http://fixture.test/v1",
                               model_id="fixture-embed")
        backend = make_backend(handler, config)
        first = backend.embed(["alpha", "beta"])
        second = backend.embed(["alpha", "beta"])
        assert seen[0] == expected
        assert len(first) == 2
        assert first[0].vector == (1.0, 0.0, 0.0)
        assert first[1].vector == (0.0, 1.0, 0.0)
        assert len(first[0].vector) == len(first[1].vector)
        assert first == second  # identical inputs, identical vectors

    def test_single_text(self, embeddings_fixture):
        response = {"object": "list", "data": [embeddings_fixture["response"]["data"][0]],
                    "model": "fixture-embed"}
        backend = make_backend(lambda r: httpx.Response(200, json=response))
        out = backend.embed(["a"])
        assert len(out) == 1

    def test_count_mismatch_rejected(self, embeddings_fixture):
        backend = make_backend(
            lambda r: httpx.Response(200, json=embeddings_fixture["response"])
        )
        with pytest.raises(BadResponseError):
            backend.embed(["only one text"])

    def test_empty_inputs_rejected(self):
        backend = make_backend(lambda r: httpx.Response(200, json={}))
        with pytest.raises(ValueError):
            backend.embed([])
        with pytest.raises(ValueError):
            backend.embed(["ok", ""])


class TestMockHeuristics:
    def test_detect_needs_both_cues(self):
        argument = build_detection_prompt("Recycling helps because it reduces waste")
        assert mock_complete(argument) == "Argument"
        plain = build_detection_prompt("The sky is blue")
        assert mock_complete(plain) == "NoArgument"
        no_assertion = build_detection_prompt("Ran home because of rain")
        assert mock_complete(no_assertion) == "NoArgument"

    def test_extract_first_capitalized_span(self):
        prompt = build_cte_prompt("GMOs are bad because they carry glyphosate.")
        assert mock_complete(prompt) == "Topic: GMOs"

    def test_extract_abstains_without_candidates(self):
        prompt = build_cte_prompt("nothing capitalized here at all")
        assert mock_complete(prompt) == "Topic: No Topic"

    def test_stance_polarity_near_topic(self):
        against = build_stance_prompt(
            "Glyphosate is a chemical in GMOs and Glyphosate is bad for you, "
            "therefore GMOs are bad for you.", "GMOs")
        assert mock_complete(against) == "Against"
        favor = build_stance_prompt(
            "School uniforms are good because they reduce bullying.", "school uniforms")
        assert mock_complete(favor) == "Favor"
        neutral = build_stance_prompt("The sky has a color.", "sky")
        assert mock_complete(neutral) == "NoArgument"

    def test_mock_is_pure(self):
        prompt = build_detection_prompt("Zoos are wrong because confinement is cruel.")
        assert mock_complete(prompt) == mock_complete(prompt)
        a, b = MockBackend(), MockBackend()
        assert a.complete(prompt) == b.complete(prompt)

    def test_call_log(self):
        backend = MockBackend()
        prompt = build_detection_prompt("School uniforms are good because they help.")
        backend.complete(prompt)
        assert backend.calls == [prompt]


class TestMockGeneration:
    def test_deterministic_and_short(self):
        system, user = build_generation_prompt("school uniforms", "informal", "deductive")
        text = mock_generate(user)
        assert text == mock_generate(user)
        assert "school uniforms" in text
        assert 1 <= len(split_sentences(text)) <= 3

    def test_non_argument_variant(self):
        _, user = build_generation_prompt("school uniforms", "formal", None)
        text = mock_generate(user)
        assert "school uniforms" in text
        backend = MockBackend()
        assert backend.complete_raw("sys", user) == text


class TestMockEmbeddings:
    def test_shape_and_determinism(self):
        first = mock_embed(["alpha", "beta"])
        second = mock_embed(["alpha", "beta"])
        assert first == second
        assert len(first) == 2
        assert len(first[0].vector) == len(first[1].vector) == 64

    def test_identical_strings_identical_vectors(self):
        a, b = mock_embed(["nuclear weapons", "nuclear weapons"])
        assert a.vector == b.vector

    def test_unit_norm(self):
        import math

        (embedding,) = mock_embed(["carbon taxes"])
        norm = math.sqrt(sum(x * x for x in embedding.vector))
        assert abs(norm - 1.0) < 1e-9
