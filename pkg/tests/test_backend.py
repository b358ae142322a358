import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from renalct.backend import (
    BackendConfig,
    generate,
    generate_batch,
    noisy_stub_generate,
    report_from_dict,
    report_to_dict,
    stub_generate,
)
from renalct.errors import BackendError, ConfigError
from renalct.extract import parse_report_rule_based
from renalct.prompt import Modality, render_feature_extraction_prompt, render_generation_prompt
from renalct.schema import Attenuation, Enhancement, FeatureSet, GrowthPattern, Position

WORKED = FeatureSet(
    position=Position.LEFT, raw_size="1.78 cm", size_cm=1.78,
    exophytic=GrowthPattern.EXOPHYTIC, attenuation=Attenuation.HYPO,
    enhancement=Enhancement.ENHANCEMENT, cyst=True,
)


# -- stub grammar ---------------------------------------------------------------


def test_stub_worked_example():
    assert stub_generate(WORKED) == (
        "There is a 1.78 cm exophytic hypoattenuating lesion in the left kidney "
        "demonstrating enhancement, consistent with a cyst."
    )


def test_stub_empty_case():
    assert stub_generate(FeatureSet()) == "No renal abnormality features specified."


def test_stub_complex_cystic_mass():
    text = stub_generate(FeatureSet(cyst=True, mass=True))
    assert text.endswith("consistent with a complex cystic mass.")


def test_stub_unknowns_drop_their_clause():
    text = stub_generate(FeatureSet(position=Position.RIGHT, mass=True))
    assert text == "There is a lesion in the right kidney, consistent with a mass."


def test_stub_article_agreement():
    text = stub_generate(FeatureSet(exophytic=GrowthPattern.EXOPHYTIC))
    assert text.startswith("There is an exophytic lesion")


def test_noisy_rate0_identity():
    assert noisy_stub_generate(WORKED, 0.0, seed=5) == stub_generate(WORKED)


def test_noisy_rate1_no_clause_survives():
    truth = WORKED
    for seed in range(10):
        parsed = parse_report_rule_based(noisy_stub_generate(truth, 1.0, seed)).features
        assert parsed.position != truth.position
        assert parsed.size_cm != truth.size_cm
        assert parsed.exophytic != truth.exophytic
        assert parsed.attenuation != truth.attenuation
        assert parsed.enhancement != truth.enhancement
        assert (parsed.cyst, parsed.mass, parsed.tumor) != (truth.cyst, truth.mass, truth.tumor)


def test_noisy_deterministic_snapshot():
    first = noisy_stub_generate(WORKED, 0.3, seed=99)
    assert noisy_stub_generate(WORKED, 0.3, seed=99) == first
    assert noisy_stub_generate(WORKED, 0.3, seed=100) != first


def test_noisy_rejects_bad_rate():
    with pytest.raises(ConfigError):
        noisy_stub_generate(WORKED, 1.5, seed=0)


# -- stub backend through generate() --------------------------------------------


def test_generate_stub_is_deterministic_end_to_end():
    prompt = render_generation_prompt(WORKED, None, Modality.FEATURE_ONLY)
    cfg = BackendConfig(endpoint="stub:")
    first = generate(prompt, cfg, annotation_id="a1", modality="feature_only", mode="zs")
    second = generate(prompt, cfg, annotation_id="a1", modality="feature_only", mode="zs")
    assert first.text == second.text == stub_generate(WORKED)
    assert first.annotation_id == "a1"
    assert first.mode == "zs"


def test_stub_answers_feature_extraction_prompts():
    sentence = stub_generate(WORKED)
    prompt = render_feature_extraction_prompt(sentence)
    report = generate(prompt, BackendConfig(endpoint="stub:"))
    payload = json.loads(report.text)
    assert payload["Abnormality"] is True
    assert payload["Abnormality_Info"][0]["Position"] == "left"
    assert payload["Abnormality_Info"][0]["Size_cm"] == 1.78


def test_stub_answers_sentence_extraction_prompts():
    from renalct.prompt import render_sentence_extraction_prompt

    report = "FINDINGS: There is a 2 cm cyst in the left kidney (series 4 image 12)."
    prompt = render_sentence_extraction_prompt(report)
    answer = generate(prompt, BackendConfig(endpoint="stub:"))
    payload = json.loads(answer.text)
    assert payload["renal_extracts"]["FINDINGS"] == report
    assert payload["renal_extracts"]["HISTORY"] == "none"

    boring = render_sentence_extraction_prompt("FINDINGS: Unremarkable abdomen.")
    payload = json.loads(generate(boring, BackendConfig(endpoint="stub:")).text)
    assert payload["renal_extracts"]["FINDINGS"] == "none"


def test_report_dict_round_trip():
    prompt = render_generation_prompt(WORKED, None, Modality.FEATURE_ONLY)
    report = generate(prompt, BackendConfig(), annotation_id="x", modality="feature_only")
    back = report_from_dict(report_to_dict(report))
    assert back.text == report.text
    assert back.annotation_id == "x"


# -- HTTP backend against a fake server ------------------------------------------


class FakeServer:
    """Chat-completions endpoint with scripted behavior and instrumentation."""

    def __init__(self, behavior="echo", response_delay=0.0):
        self.behavior = behavior
        self.response_delay = response_delay
        self.attempts = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self.bodies = []
        self.lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                with outer.lock:
                    outer.attempts += 1
                    outer.in_flight += 1
                    outer.max_in_flight = max(outer.max_in_flight, outer.in_flight)
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    body = json.loads(self.rfile.read(length))
                    with outer.lock:
                        outer.bodies.append(body)
                    if outer.response_delay:
                        time.sleep(outer.response_delay)
                    if outer.behavior == "hang":
                        time.sleep(5.0)
                        return
                    if outer.behavior == "http400":
                        self.send_response(400)
                        payload = b'{"error": "bad request details"}'
                        self.send_header("Content-Length", str(len(payload)))
                        self.end_headers()
                        self.wfile.write(payload)
                        return
                    if outer.behavior == "http500":
                        self.send_response(500)
                        self.send_header("Content-Length", "2")
                        self.end_headers()
                        self.wfile.write(b"{}")
                        return
                    if outer.behavior == "empty":
                        text = ""
                    else:
                        text = "echo: " + str(body["messages"][-1]["content"])[:40]
                    payload = json.dumps(
                        {
                            "choices": [{"message": {"role": "assistant", "content": text}}],
                            "usage": {"prompt_tokens": 5, "completion_tokens": 7},
                        }
                    ).encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                finally:
                    with outer.lock:
                        outer.in_flight -= 1

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def prompt():
    return render_generation_prompt(WORKED, None, Modality.FEATURE_ONLY)


def test_http_happy_path_records_usage(prompt):
    server = FakeServer()
    try:
        cfg = BackendConfig(endpoint=server.endpoint, model="m1", timeout_s=5.0)
        report = generate(prompt, cfg)
        assert report.text.startswith("echo:")
        assert report.usage == {"prompt_tokens": 5, "completion_tokens": 7}
        assert report.latency_ms > 0
        body = server.bodies[0]
        assert body["model"] == "m1"
        assert body["temperature"] == 0.0
        assert body["messages"][0]["role"] == "system"
        assert body["messages"][1]["role"] == "user"
        assert isinstance(body["messages"][1]["content"], str)
    finally:
        server.close()


def test_http_image_attachment_wire_shape():
    from make_fixtures import golden_image

    server = FakeServer()
    try:
        image_prompt = render_generation_prompt(WORKED, golden_image(), Modality.BOTH)
        generate(image_prompt, BackendConfig(endpoint=server.endpoint, timeout_s=5.0))
        content = server.bodies[0]["messages"][1]["content"]
        assert content[0]["type"] == "text"
        assert content[1]["type"] == "image_url"
        assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")
    finally:
        server.close()


def test_timeout_consumes_exactly_max_retries_plus_one(prompt):
    server = FakeServer(behavior="hang")
    try:
        cfg = BackendConfig(
            endpoint=server.endpoint, timeout_s=0.2, max_retries=2, backoff_base_s=0.01
        )
        with pytest.raises(BackendError, match="3 attempts"):
            generate(prompt, cfg)
        assert server.attempts == 3  # max_retries + 1
    finally:
        server.close()


def test_http_4xx_fails_immediately_with_body_excerpt(prompt):
    server = FakeServer(behavior="http400")
    try:
        cfg = BackendConfig(endpoint=server.endpoint, timeout_s=5.0, max_retries=3)
        with pytest.raises(BackendError, match="bad request details"):
            generate(prompt, cfg)
        assert server.attempts == 1
    finally:
        server.close()


def test_http_5xx_retries(prompt):
    server = FakeServer(behavior="http500")
    try:
        cfg = BackendConfig(
            endpoint=server.endpoint, timeout_s=5.0, max_retries=1, backoff_base_s=0.01
        )
        with pytest.raises(BackendError):
            generate(prompt, cfg)
        assert server.attempts == 2
    finally:
        server.close()


def test_empty_completion_is_an_error(prompt):
    server = FakeServer(behavior="empty")
    try:
        with pytest.raises(BackendError, match="empty completion"):
            generate(prompt, BackendConfig(endpoint=server.endpoint, timeout_s=5.0))
    finally:
        server.close()


def test_retries_logged_with_schedule(prompt, caplog):
    server = FakeServer(behavior="http500")
    try:
        cfg = BackendConfig(
            endpoint=server.endpoint, timeout_s=5.0, max_retries=2, backoff_base_s=0.01
        )
        with caplog.at_level(logging.WARNING, logger="renalct.backend"):
            with pytest.raises(BackendError):
                generate(prompt, cfg)
        retries = [r for r in caplog.records if "backend retry" in r.getMessage()]
        assert len(retries) == 2
        assert "delay=" in retries[0].getMessage()
    finally:
        server.close()


def test_unreachable_endpoint_errors_after_retries(prompt):
    cfg = BackendConfig(
        endpoint="http://127.0.0.1:9", timeout_s=0.2, max_retries=1, backoff_base_s=0.01
    )
    with pytest.raises(BackendError, match="2 attempts"):
        generate(prompt, cfg)


def test_batch_concurrency_never_exceeds_limit():
    server = FakeServer(response_delay=0.02)
    try:
        cfg = BackendConfig(
            endpoint=server.endpoint, timeout_s=10.0, max_concurrent_requests=4
        )
        prompts = [
            render_generation_prompt(
                FeatureSet(position=Position.LEFT, size_cm=round(0.5 + i * 0.01, 2),
                           raw_size=f"{0.5 + i * 0.01:.2f} cm"),
                None, Modality.FEATURE_ONLY,
            )
            for i in range(100)
        ]
        ids = [f"a{i}" for i in range(100)]
        reports = generate_batch(prompts, cfg, annotation_ids=ids, modality="feature_only")
        assert [r.annotation_id for r in reports] == ids  # input order preserved
        assert server.attempts == 100
        assert server.max_in_flight <= 4
    finally:
        server.close()


def test_backend_config_validation():
    with pytest.raises(ConfigError):
        BackendConfig(max_concurrent_requests=0)
    with pytest.raises(ConfigError):
        BackendConfig(temperature=-1)
