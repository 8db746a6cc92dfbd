import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evosmc.core import RewardValue, derive_rng, make_program
from evosmc.evaluators import BitstringEvaluator
from evosmc.llm import (
    AmbiguousMatch,
    BudgetExhausted,
    ChatRequest,
    DiffEdit,
    EmptyCode,
    HttpStatusError,
    LlmProposalKernel,
    MalformedApiResponse,
    MissingTag,
    NoMatch,
    NoOpEdit,
    OpenAiChatClient,
    RewardLedger,
    TransportError,
    apply_diff,
    make_llm_kernels,
    parse_response,
    render_prompt,
    verify_templates,
)
from evosmc.llm.diff import DiffError
from evosmc.llm.mockserver import MockLlmTransport, scripted_completion, start_mock_server
from evosmc.llm.parse import MalformedDiffBlock
from evosmc.mutate import MutationContext


# --- response parsing ---

DIFF_RESPONSE = """Some prose the model added.

<NAME>
Better Loop
</NAME>

<DESCRIPTION>
Tightens the loop.
</DESCRIPTION>

<DIFF>
<<<<<<< SEARCH
x = 1
=======
x = 2
>>>>>>> REPLACE
</DIFF>
"""

CODE_RESPONSE = """<NAME>
rewrite
</NAME>

<CODE>
```python
def f():
    return 2
```
</CODE>
"""


def test_parse_diff_response():
    parsed = parse_response(DIFF_RESPONSE, expect="diff")
    assert parsed.name == "better_loop"
    assert parsed.description == "Tightens the loop."
    assert parsed.edits == (DiffEdit(search="x = 1", replace="x = 2"),)


def test_parse_code_response():
    parsed = parse_response(CODE_RESPONSE, expect="code")
    assert parsed.code == "def f():\n    return 2"
    assert parsed.description == ""


def test_parse_code_without_fence_uses_raw_payload():
    parsed = parse_response("<CODE>\nprint(1)\n</CODE>", expect="code")
    assert parsed.code == "print(1)"
    assert parsed.name == "unnamed"


def test_parse_multiple_diff_blocks_in_order():
    raw = (
        "<DIFF>\n"
        "<<<<<<< SEARCH\na\n=======\nb\n>>>>>>> REPLACE\n"
        "<<<<<<< SEARCH\nc\n=======\nd\n>>>>>>> REPLACE\n"
        "</DIFF>"
    )
    parsed = parse_response(raw, expect="diff")
    assert [e.search for e in parsed.edits] == ["a", "c"]


def test_parse_missing_section_raises():
    with pytest.raises(MissingTag):
        parse_response("<CODE>\nx\n</CODE>", expect="diff")
    with pytest.raises(MissingTag):
        parse_response("no tags at all", expect="code")


def test_parse_malformed_diff_raises():
    with pytest.raises(MalformedDiffBlock):
        parse_response("<DIFF>\nnot a block\n</DIFF>", expect="diff")
    with pytest.raises(MalformedDiffBlock):
        parse_response(
            "<DIFF>\n<<<<<<< SEARCH\n\n=======\nx\n>>>>>>> REPLACE\n</DIFF>", expect="diff"
        )


def test_parse_empty_code_raises():
    with pytest.raises(EmptyCode):
        parse_response("<CODE>\n```\n\n```\n</CODE>", expect="code")


def test_parse_expect_guard():
    with pytest.raises(ValueError):
        parse_response("x", expect="prose")


# --- diff application ---

def test_apply_diff_unique_match():
    out = apply_diff("a\nb\nc\n", [DiffEdit(search="b", replace="B")])
    assert out == "a\nB\nc\n"


def test_apply_diff_sequential_edits_see_prior_results():
    edits = [DiffEdit(search="one", replace="two"), DiffEdit(search="two two", replace="done")]
    assert apply_diff("two one", edits) == "done"


def test_apply_diff_no_match():
    with pytest.raises(NoMatch):
        apply_diff("abc", [DiffEdit(search="zzz", replace="y")])


def test_apply_diff_ambiguous_match():
    with pytest.raises(AmbiguousMatch):
        apply_diff("dup\ndup\n", [DiffEdit(search="dup", replace="x")])


def test_apply_diff_noop_rejected():
    with pytest.raises(NoOpEdit):
        apply_diff("abc", [DiffEdit(search="abc", replace="abc")])


def test_diff_edit_requires_search_text():
    with pytest.raises(DiffError):
        DiffEdit(search="", replace="x")


def test_apply_diff_lenient_trailing_whitespace():
    source = "line one   \nline two\n"
    edit = DiffEdit(search="line one\nline two", replace="merged")
    with pytest.raises(NoMatch):
        apply_diff(source, [edit])
    assert apply_diff(source, [edit], lenient_trailing_whitespace=True) == "merged\n"


@settings(max_examples=80, deadline=None)
@given(
    tokens=st.lists(st.integers(0, 10_000), min_size=2, max_size=12, unique=True),
    pick=st.data(),
)
def test_apply_diff_unique_replacement_property(tokens, pick):
    lines = [f"line_{t}_payload" for t in tokens]
    source = "\n".join(lines)
    idx = pick.draw(st.integers(0, len(lines) - 1))
    replacement = "replacement_text"
    out = apply_diff(source, [DiffEdit(search=lines[idx], replace=replacement)])
    expected = "\n".join(lines[:idx] + [replacement] + lines[idx + 1 :])
    assert out == expected
    assert out.count(replacement) == 1


# --- prompt templates ---

def test_templates_match_pinned_checksums():
    verify_templates()


def test_render_prompt_substitutions():
    parent = make_program("def f():\n    return 0\n", "python")
    system, user = render_prompt("diff_no_inspo", parent, metrics="reward: 0.25")
    assert "{{" not in system and "{{" not in user
    assert parent.source in user
    assert "reward: 0.25" in user
    assert "SEARCH" in system  # diff kernels instruct the edit format


def test_render_prompt_empty_metrics_placeholder():
    _, user = render_prompt("rewrite_no_inspo", make_program("x"), metrics="")
    assert "n/a" in user


def test_render_prompt_inspirations():
    inspo = [
        (make_program("best_so_far"), RewardValue(0.9)),
        (make_program("diverse_one"), RewardValue(0.2)),
    ]
    _, user = render_prompt("rewrite_with_inspo", make_program("x"), inspirations=inspo)
    assert "Reference Program 1" in user and "Reference Program 2" in user
    assert "best_so_far" in user and "diverse_one" in user
    assert "0.9" in user


def test_render_prompt_unknown_kernel():
    with pytest.raises(ValueError):
        render_prompt("mystery_kernel", make_program("x"))


# --- chat client ---

def _request():
    return ChatRequest(model="m", system="sys", user="usr")


def _ok_body(content="hello"):
    return {"choices": [{"message": {"content": content}}]}


def test_client_happy_path_and_transcript_redaction(monkeypatch):
    monkeypatch.setenv("EVOSMC_API_KEY", "secret-token")
    seen = {}

    def transport(url, payload, headers, timeout):
        seen.update(url=url, payload=payload, headers=headers)
        return 200, _ok_body("hi")

    client = OpenAiChatClient(endpoint="http://x", transport=transport)
    assert client.chat(_request()) == "hi"
    assert seen["url"] == "http://x/v1/chat/completions"
    assert seen["headers"]["Authorization"] == "Bearer secret-token"
    assert client.requests_sent == 1
    # Transcripts never contain the credential.
    assert "secret-token" not in json.dumps(client.transcripts)


def test_client_retries_transient_then_succeeds():
    calls = {"n": 0}

    def transport(url, payload, headers, timeout):
        calls["n"] += 1
        if calls["n"] < 3:
            return 503, "busy"
        return 200, _ok_body()

    client = OpenAiChatClient(endpoint="http://x", transport=transport, backoff_base_s=0.0)
    assert client.chat(_request()) == "hello"
    assert calls["n"] == 3


def test_client_retries_exhausted_raises_last_error():
    client = OpenAiChatClient(
        endpoint="http://x",
        transport=lambda *a: (429, "rate limited"),
        max_retries=2,
        backoff_base_s=0.0,
    )
    with pytest.raises(HttpStatusError) as err:
        client.chat(_request())
    assert err.value.status == 429


def test_client_non_transient_status_fails_fast():
    calls = {"n": 0}

    def transport(url, payload, headers, timeout):
        calls["n"] += 1
        return 400, "bad request"

    client = OpenAiChatClient(endpoint="http://x", transport=transport, backoff_base_s=0.0)
    with pytest.raises(HttpStatusError):
        client.chat(_request())
    assert calls["n"] == 1


def test_client_transport_error_retried():
    calls = {"n": 0}

    def transport(url, payload, headers, timeout):
        calls["n"] += 1
        if calls["n"] == 1:
            raise TransportError("connection reset")
        return 200, _ok_body()

    client = OpenAiChatClient(endpoint="http://x", transport=transport, backoff_base_s=0.0)
    assert client.chat(_request()) == "hello"


def test_client_budget_enforced():
    client = OpenAiChatClient(
        endpoint="http://x", transport=lambda *a: (200, _ok_body()), request_budget=2
    )
    client.chat(_request())
    client.chat(_request())
    with pytest.raises(BudgetExhausted):
        client.chat(_request())
    assert client.requests_sent == 2


def test_client_malformed_response():
    client = OpenAiChatClient(endpoint="http://x", transport=lambda *a: (200, {"nope": 1}))
    with pytest.raises(MalformedApiResponse):
        client.chat(_request())


def test_client_ensemble_routing_roughly_even():
    client = OpenAiChatClient(
        endpoint="http://x",
        models=("m1", "m2"),
        ensemble_rng=derive_rng(0, 0, "ensemble"),
    )
    picks = [client.pick_model() for _ in range(2000)]
    share = picks.count("m1") / 2000
    assert 0.45 < share < 0.55


# --- scripted backend and kernels ---

def _user_payload(source, system="use SEARCH/REPLACE blocks"):
    return {
        "model": "m",
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": f"```python\n{source}\n```"},
        ],
    }


def test_scripted_completion_deterministic():
    payload = _user_payload("0101")
    assert scripted_completion(payload) == scripted_completion(payload)


def test_scripted_completion_diff_vs_code_mode():
    assert "<DIFF>" in scripted_completion(_user_payload("0101"))
    assert "<CODE>" in scripted_completion(_user_payload("0101", system="rewrite everything"))


def test_mock_http_server_round_trip():
    server, base_url = start_mock_server()
    try:
        client = OpenAiChatClient(endpoint=base_url)
        content = client.chat(_request())
        assert content == client.chat(_request())  # pure function of the payload
        assert "<NAME>" in content
    finally:
        server.shutdown()


def _context(kernel_id, inspirations=()):
    return MutationContext(iteration=1, beta_t=2.0, kernel_id=kernel_id, inspirations=inspirations)


def test_llm_kernel_proposes_single_char_mutation():
    client = OpenAiChatClient(endpoint="mock://", transport=MockLlmTransport())
    kernels = make_llm_kernels(client)
    parent = make_program("00000000", "bitstring")
    rng = derive_rng(0, 0, "proposal")
    for kid in ("diff_no_inspo", "rewrite_no_inspo"):
        result = kernels[kid].propose(parent, _context(kid), rng)
        assert result.parse_ok
        assert result.candidate.source != parent.source
        assert len(result.candidate.source) == len(parent.source)
        assert sum(a != b for a, b in zip(result.candidate.source, parent.source)) == 1


def test_llm_kernel_chat_error_becomes_parse_failure():
    def transport(url, payload, headers, timeout):
        return 500, "down"

    client = OpenAiChatClient(endpoint="http://x", transport=transport, max_retries=0, backoff_base_s=0.0)
    kernel = LlmProposalKernel(kernel_id="rewrite_no_inspo", client=client)
    result = kernel.propose(make_program("x"), _context("rewrite_no_inspo"), derive_rng(0, 0, "proposal"))
    assert not result.parse_ok and result.candidate is None
    assert "error" in result.raw_response


def test_llm_kernel_unparseable_response_becomes_parse_failure():
    client = OpenAiChatClient(endpoint="http://x", transport=lambda *a: (200, _ok_body("word salad")))
    kernel = LlmProposalKernel(kernel_id="diff_no_inspo", client=client)
    result = kernel.propose(make_program("x"), _context("diff_no_inspo"), derive_rng(0, 0, "proposal"))
    assert not result.parse_ok and result.raw_response == "word salad"


def test_reward_ledger_wraps_evaluator_and_renders_metrics():
    ledger = RewardLedger()
    wrapped = ledger.wrap(BitstringEvaluator(4))
    program = make_program("1100", "bitstring")
    assert ledger.metrics_for(program) == ""
    reward = wrapped.evaluate(program)
    assert reward.value == 0.5
    assert ledger.metrics_for(program) == "reward: 0.5"
    assert wrapped.deterministic
