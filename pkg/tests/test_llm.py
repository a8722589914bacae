import json

import pytest
from hypothesis import given, settings, strategies as st

from policyevo.lang import parse
from policyevo.llm import (
    AuthError,
    EndpointConfig,
    LlmGateway,
    MalformedResponse,
    MissingBinding,
    Operator,
    RateLimited,
    TransportError,
    extract,
    render,
)
from policyevo.llm.gateway import build_payload
from policyevo.llm.prompts import format_progression, load_text, placeholders, template_version

KEY_ENV = "POLICYEVO_TEST_KEY"
SECRET = "sk-test-0123456789"


def ok_body(text="```\nreturn 0\n```"):
    return json.dumps({"choices": [{"message": {"content": text}}], "usage": {"prompt_tokens": 5, "completion_tokens": 7}})


class StubTransport:
    def __init__(self, *replies):
        self.replies = list(replies)
        self.seen = []

    def __call__(self, url, headers, payload, timeout):
        self.seen.append((url, headers, payload))
        r = self.replies.pop(0)
        if isinstance(r, Exception):
            raise r
        return r


@pytest.fixture
def gateway_factory(monkeypatch):
    monkeypatch.setenv(KEY_ENV, SECRET)
    sleeps = []

    def make(*replies, **kw):
        ep = EndpointConfig(base_url="http://llm.invalid/v1", api_key_env=KEY_ENV, **kw)
        t = StubTransport(*replies)
        g = LlmGateway(ep, transport=t, sleep=sleeps.append)
        return g, t, sleeps

    return make


def request():
    return render(Operator.INIT, {"task_description": "land"})


# -- templates -------------------------------------------------------------------

BINDINGS = {
    "task_description": "T",
    "parent_programs": "P",
    "next_version": "2",
    "parent_a": "A",
    "parent_b": "B",
    "parent": "X",
    "domain_hints": "H",
    "episodes": "10",
    "fitness_summary": "F",
    "failure_stats": "S",
    "best_so_far": "1.0",
}


@pytest.mark.parametrize("op", list(Operator))
def test_every_template_renders_without_leftover_placeholders(op):
    req = render(op, BINDINGS)
    assert req.template_id is op
    assert "{" not in req.user_text.replace("{{", "")
    assert req.template_version == template_version()
    assert req.system_text == load_text("system.txt")


def test_missing_binding():
    b = dict(BINDINGS)
    del b["failure_stats"]
    with pytest.raises(MissingBinding):
        render(Operator.EVOENGINEER_REFINE, b)


def test_render_is_deterministic():
    assert render(Operator.EOH_CROSSOVER, BINDINGS) == render(Operator.EOH_CROSSOVER, BINDINGS)


def test_model_and_temperature_pass_through():
    req = render(Operator.INIT, BINDINGS, temperature=0.2, model_name="local-model")
    body = build_payload(req)
    assert body["model"] == "local-model" and body["temperature"] == 0.2
    assert [m["role"] for m in body["messages"]] == ["system", "user"]


def test_refine_template_covers_context():
    names = set(placeholders(load_text("evoengineer_refine.txt")))
    assert {"domain_hints", "failure_stats", "fitness_summary", "parent"} <= names


def test_progression_lists_parents_worst_to_best():
    text = format_progression([("return 2\n", 9.1), ("return 0\n", -200.0)])
    assert text.index("-200.00") < text.index("9.10")
    assert text.index("Version 0") < text.index("Version 1")


# -- extraction -------------------------------------------------------------------


def test_extract_single_block():
    ex = extract("Here:\n```python\nreturn 1\n```\nbye")
    assert ex.code == "return 1\n" and ex.rationale is None


def test_extract_no_block():
    assert extract("just prose").code is None


def test_extract_first_of_two_blocks(caplog):
    ex = extract("```\nreturn 1\n```\n```\nreturn 2\n```")
    assert ex.code == "return 1\n" and ex.ignored_blocks == 1


def test_extract_rationale():
    ex = extract("RATIONALE: it falls too fast.\nBrake earlier.\n```\nreturn 2\n```")
    assert ex.rationale == "it falls too fast.\nBrake earlier."
    assert ex.code == "return 2\n"


def test_unterminated_fence_is_not_code():
    assert extract("```\nreturn 1\n").code is None


@settings(max_examples=500)
@given(st.binary(max_size=300))
def test_extract_total_on_bytes(data):
    ex = extract(data)
    if ex.code is not None:
        assert ex.code in data.decode("utf-8", errors="replace")


@settings(max_examples=300)
@given(st.text(alphabet=st.sampled_from(list("`\nRATIONLE: ab")), max_size=80))
def test_extracted_code_comes_from_a_fence(text):
    ex = extract(text)
    if ex.code is not None:
        assert text.count("```") >= 2 and ex.code in text


# -- gateway ------------------------------------------------------------------------


def test_canned_body_round_trip(gateway_factory):
    g, t, _ = gateway_factory((200, ok_body("hello ```\nreturn 3\n```")))
    resp = g.complete(request())
    assert resp.raw_text == "hello ```\nreturn 3\n```"
    assert resp.token_counts == {"prompt": 5, "completion": 7}
    assert g.calls == 1 and resp.attempts == 1
    url, headers, payload = t.seen[0]
    assert url == "http://llm.invalid/v1/chat/completions"
    assert headers["Authorization"] == f"Bearer {SECRET}"
    assert SECRET not in json.dumps(payload)


def test_retries_count_as_one_call(gateway_factory):
    g, t, sleeps = gateway_factory(TransportError("reset"), (503, ""), (200, ok_body()))
    resp = g.complete(request())
    assert g.calls == 1 and g.attempts == 3 and resp.attempts == 3
    assert sleeps == [1.0, 2.0]


def test_rate_limit_is_retried(gateway_factory):
    g, _, _ = gateway_factory((429, ""), (200, ok_body()))
    assert g.complete(request()).attempts == 2


def test_backoff_is_capped(gateway_factory):
    g, _, sleeps = gateway_factory(*[(500, "")] * 6, (200, ok_body()), max_retries=6, backoff_cap=3.0)
    g.complete(request())
    assert sleeps == [1.0, 2.0, 3.0, 3.0, 3.0, 3.0]


@pytest.mark.parametrize("status", [401, 403])
def test_auth_failure_is_not_retried(gateway_factory, status):
    g, t, _ = gateway_factory((status, ""), (200, ok_body()))
    with pytest.raises(AuthError):
        g.complete(request())
    assert len(t.seen) == 1 and g.calls == 1


def test_final_failure_still_counts_once(gateway_factory):
    g, _, _ = gateway_factory(*[(500, "")] * 3, max_retries=2)
    with pytest.raises(TransportError):
        g.complete(request())
    assert g.calls == 1 and g.attempts == 3


def test_persistent_rate_limit_surfaces(gateway_factory):
    g, _, _ = gateway_factory((429, ""), (429, ""), max_retries=1)
    with pytest.raises(RateLimited):
        g.complete(request())


def test_client_error_not_retried(gateway_factory):
    g, t, _ = gateway_factory((400, "bad"), (200, ok_body()))
    with pytest.raises(TransportError):
        g.complete(request())
    assert len(t.seen) == 1


@pytest.mark.parametrize("body", ["not json", "{}", json.dumps({"choices": [{"message": {"content": 3}}]})])
def test_malformed_body(gateway_factory, body):
    g, _, _ = gateway_factory((200, body))
    with pytest.raises(MalformedResponse):
        g.complete(request())


def test_missing_credential_fails_before_dispatch(monkeypatch):
    monkeypatch.delenv(KEY_ENV, raising=False)
    t = StubTransport((200, ok_body()))
    g = LlmGateway(EndpointConfig(api_key_env=KEY_ENV), transport=t)
    with pytest.raises(AuthError) as info:
        g.check_credentials()
    assert KEY_ENV in str(info.value)
    with pytest.raises(AuthError):
        g.complete(request())
    assert t.seen == [] and g.calls == 0


def test_concurrent_calls_are_counted_exactly(gateway_factory):
    from concurrent.futures import ThreadPoolExecutor

    g, _, _ = gateway_factory(*[(200, ok_body())] * 40)
    with ThreadPoolExecutor(8) as pool:
        list(pool.map(lambda _: g.complete(request()), range(40)))
    assert g.calls == 40


def test_extracted_code_from_gateway_parses(gateway_factory):
    g, _, _ = gateway_factory((200, ok_body("```\nif y > 0.5: return 2 end\nreturn 0\n```")))
    parse(g.complete(request()).extracted_code)
