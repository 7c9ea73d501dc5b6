"""Provider-agnostic chat interface.

Tool invocations are parsed from free assistant text (call-expression syntax
with literal arguments) rather than native provider tool-calling, which keeps
providers interchangeable. A deterministic scripted provider replays recorded
exchanges for tests.
"""

from __future__ import annotations

import ast
import hashlib
import json
import math
import re
import textwrap
import time
from dataclasses import dataclass, field
from pathlib import Path

from tddgen.errors import (
    NoCandidateError,
    ProviderError,
    ReplayExhaustedError,
    ReplayMismatchError,
)
from tddgen.sandbox import CandidateBody

ROLES = ("system", "user", "assistant", "tool")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str
    tool_results: tuple[tuple[str, str, str], ...] | None = None  # (api, args_digest, payload)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "tool" and self.tool_results is None:
            raise ValueError("tool messages must carry tool_results")


@dataclass(frozen=True)
class TokenUsage:
    input_tokens: int = 0
    output_tokens: int = 0
    estimated: bool = False

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.input_tokens + other.input_tokens,
            self.output_tokens + other.output_tokens,
            self.estimated or other.estimated,
        )


@dataclass(frozen=True)
class ProviderConfig:
    kind: str  # "http_chat" | "scripted"
    model_name: str = ""
    temperature: float = 0.0
    max_output_tokens: int = 4096
    endpoint: str = ""  # http_chat only
    api_key_env: str = ""  # http_chat only
    replay_path: str = ""  # scripted only
    max_retries: int = 3
    backoff_base_s: float = 0.5

    def __post_init__(self):
        if self.kind not in ("http_chat", "scripted"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.kind == "http_chat" and not self.endpoint:
            raise ValueError("http_chat provider needs an endpoint")
        if self.kind == "scripted" and not self.replay_path:
            raise ValueError("scripted provider needs a replay_path")


def estimate_tokens(text: str) -> int:
    """Fallback when a provider omits usage: ceil(characters / 4)."""
    return math.ceil(len(text) / 4)


def prompt_digest(messages: list[ChatMessage]) -> str:
    payload = "\x1e".join(f"{m.role}\x1f{m.content}" for m in messages)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ScriptedProvider:
    """Replays recorded assistant turns from a JSON file, in order."""

    def __init__(self, replay_path: str | Path):
        self.replay_path = str(replay_path)
        doc = json.loads(Path(replay_path).read_text(encoding="utf-8"))
        if not isinstance(doc, list):
            raise ProviderError(f"replay file must be a JSON array: {replay_path}")
        self._turns = doc
        self._cursor = 0

    def complete(self, messages: list[ChatMessage]) -> tuple[str, TokenUsage]:
        if self._cursor >= len(self._turns):
            raise ReplayExhaustedError(
                f"replay exhausted after {self._cursor} turns: {self.replay_path}"
            )
        turn = self._turns[self._cursor]
        expected = turn.get("expected_prompt_digest")
        if expected and expected != prompt_digest(messages):
            raise ReplayMismatchError(
                f"turn {self._cursor}: prompt digest mismatch in {self.replay_path}"
            )
        self._cursor += 1
        return turn["assistant_text"], TokenUsage(
            turn.get("input_tokens", 0), turn.get("output_tokens", 0)
        )


class HttpChatProvider:
    """Minimal chat-completions-style HTTP client with retry/backoff."""

    def __init__(self, cfg: ProviderConfig):
        self.cfg = cfg

    def complete(self, messages: list[ChatMessage]) -> tuple[str, TokenUsage]:
        import os

        import requests

        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
            "messages": [{"role": m.role if m.role != "tool" else "user", "content": m.content} for m in messages],
        }
        last_exc: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            try:
                resp = requests.post(self.cfg.endpoint, json=payload, headers=headers, timeout=120)
                resp.raise_for_status()
                doc = resp.json()
                text = doc["choices"][0]["message"]["content"]
                usage = doc.get("usage") or {}
                if "prompt_tokens" in usage:
                    return text, TokenUsage(usage["prompt_tokens"], usage.get("completion_tokens", 0))
                prompt_chars = sum(len(m.content) for m in messages)
                return text, TokenUsage(
                    estimate_tokens(" " * prompt_chars), estimate_tokens(text), estimated=True
                )
            except Exception as exc:  # noqa: BLE001 - transport and schema errors retry alike
                last_exc = exc
                if attempt < self.cfg.max_retries:
                    time.sleep(self.cfg.backoff_base_s * (2**attempt))
        raise ProviderError(f"provider failed after {self.cfg.max_retries + 1} attempts: {last_exc}")


def make_provider(cfg: ProviderConfig):
    if cfg.kind == "scripted":
        return ScriptedProvider(cfg.replay_path)
    return HttpChatProvider(cfg)


def complete(provider, messages: list[ChatMessage]) -> tuple[str, TokenUsage]:
    if not messages:
        raise ValueError("messages must be nonempty")
    if messages[0].role != "system":
        raise ValueError("first message must be the system prompt")
    return provider.complete(messages)


# ---------------------------------------------------------------------------
# Tool request extraction
# ---------------------------------------------------------------------------

#: Agent-facing API names, with their required positional parameter names.
TOOL_SIGNATURES: dict[str, tuple[str, ...]] = {
    "search_test_cases": (),
    "search_import_in_file": ("file_name",),
    "search_target_usage_example": ("example_num",),
    "search_relevant_method": ("top_num",),
    "run_pdb_cmd": ("cmd",),
    "search_class": ("class_name",),
    "search_class_in_file": ("class_name", "file_name"),
    "search_method": ("method_name",),
    "search_method_in_file": ("method_name", "file_path"),
    "search_method_in_class": ("method_name", "class_name"),
    "search_code": ("code_str",),
    "search_code_in_file": ("code_str", "file_path"),
    "get_code_around_line": ("file_path", "line_number", "window_size"),
}


@dataclass(frozen=True)
class ToolRequest:
    api_name: str
    args: tuple[tuple[str, object], ...]  # ordered (param, value) pairs
    raw_span: tuple[int, int] = (0, 0)  # [start, end) within the assistant text

    def args_dict(self) -> dict:
        return dict(self.args)

    def render(self) -> str:
        rendered = ", ".join(repr(v) for _, v in self.args)
        return f"{self.api_name}({rendered})"

    def args_digest(self) -> str:
        return hashlib.sha256(self.render().encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class RejectedRequest:
    text: str
    reason: str


_CALL_START_RE = re.compile(
    r"\b(" + "|".join(sorted(TOOL_SIGNATURES, key=len, reverse=True)) + r")\s*\("
)


def _match_call(text: str, open_paren: int) -> int | None:
    """Index just past the matching close paren, honoring string literals."""
    depth = 0
    i = open_paren
    in_str: str | None = None
    while i < len(text):
        ch = text[i]
        if in_str:
            if ch == "\\":
                i += 2
                continue
            if ch == in_str:
                in_str = None
        elif ch in "\"'":
            in_str = ch
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return i + 1
        i += 1
    return None


def _literal(node: ast.expr):
    return ast.literal_eval(node)  # raises ValueError on non-literals


def extract_tool_requests(
    assistant_text: str,
) -> tuple[list[ToolRequest], list[RejectedRequest]]:
    """Parse every well-formed registered API invocation in textual order.

    Malformed invocations of registered names (non-literal args, wrong
    arity, unknown keyword) come back in the rejected list with reasons.
    """
    requests: list[ToolRequest] = []
    rejected: list[RejectedRequest] = []
    pos = 0
    while True:
        match = _CALL_START_RE.search(assistant_text, pos)
        if not match:
            break
        name = match.group(1)
        # skip definitions ("def search_code(...)") and attribute calls;
        # a dot counts only when directly adjacent to the name
        prefix = assistant_text[: match.start()]
        if prefix.endswith(".") or re.search(r"\bdef\s+$", prefix):
            pos = match.end()
            continue
        open_paren = assistant_text.index("(", match.start())
        end = _match_call(assistant_text, open_paren)
        if end is None:
            rejected.append(
                RejectedRequest(assistant_text[match.start() : match.start() + 80], "unbalanced parentheses")
            )
            pos = match.end()
            continue
        call_text = assistant_text[match.start() : end]
        pos = end
        try:
            expr = ast.parse(call_text.strip(), mode="eval").body
        except SyntaxError:
            rejected.append(RejectedRequest(call_text, "not a parsable call expression"))
            continue
        if not isinstance(expr, ast.Call):
            rejected.append(RejectedRequest(call_text, "not a call expression"))
            continue
        params = TOOL_SIGNATURES[name]
        try:
            positional = [_literal(a) for a in expr.args]
            keywords = {kw.arg: _literal(kw.value) for kw in expr.keywords}
        except ValueError:
            rejected.append(RejectedRequest(call_text, "arguments must be literals"))
            continue
        if None in keywords:
            rejected.append(RejectedRequest(call_text, "**kwargs is not supported"))
            continue
        bound: dict[str, object] = {}
        ok = True
        for i, value in enumerate(positional):
            if i >= len(params):
                rejected.append(
                    RejectedRequest(call_text, f"{name} takes {len(params)} argument(s), got more")
                )
                ok = False
                break
            bound[params[i]] = value
        if not ok:
            continue
        unknown = set(keywords) - set(params)
        if unknown:
            rejected.append(RejectedRequest(call_text, f"unknown keyword(s): {sorted(unknown)}"))
            continue
        overlap = set(keywords) & set(bound)
        if overlap:
            rejected.append(RejectedRequest(call_text, f"duplicate argument(s): {sorted(overlap)}"))
            continue
        bound.update(keywords)
        missing = [p for p in params if p not in bound]
        if missing:
            rejected.append(RejectedRequest(call_text, f"missing argument(s): {missing}"))
            continue
        requests.append(
            ToolRequest(
                api_name=name,
                args=tuple((p, bound[p]) for p in params),
                raw_span=(match.start(), end),
            )
        )
    return requests, rejected


# ---------------------------------------------------------------------------
# Candidate extraction
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*\n(.*?)```", re.DOTALL)


def _strip_def_prefix(code: str, target_name: str) -> str:
    """If the block re-emits ``def <target>``, keep only its body statements.

    A docstring re-emitted at the top of the body is dropped too; the
    sandbox preserves the original docstring when splicing.
    """
    try:
        tree = ast.parse(textwrap.dedent(code))
    except SyntaxError:
        return code
    defs = [
        n
        for n in tree.body
        if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef)) and n.name == target_name
    ]
    if len(tree.body) != 1 or not defs:
        return code
    node = defs[0]
    body = node.body
    if (
        body
        and isinstance(body[0], ast.Expr)
        and isinstance(body[0].value, ast.Constant)
        and isinstance(body[0].value.value, str)
    ):
        body = body[1:]
    if not body:
        return code
    lines = textwrap.dedent(code).splitlines()
    return "\n".join(lines[body[0].lineno - 1 : body[-1].end_lineno])


def _target_name(target_signature: str) -> str:
    match = re.search(r"\bdef\s+([A-Za-z_][A-Za-z0-9_]*)", target_signature)
    return match.group(1) if match else ""


def extract_candidate_body(
    assistant_text: str, target_signature: str, attempt_index: int = 0
) -> CandidateBody:
    """Largest fenced code block, unwrapped and dedented to body statements."""
    blocks = [m.group(1) for m in _FENCE_RE.finditer(assistant_text)]
    if blocks:
        code = max(blocks, key=len)
    else:
        # no fence: accept the whole text only if it parses as statements
        try:
            ast.parse(textwrap.dedent(assistant_text))
            code = assistant_text
        except SyntaxError:
            raise NoCandidateError("assistant text contains no code block and no plausible body")
    code = _strip_def_prefix(code, _target_name(target_signature))
    code = textwrap.dedent(code).strip("\n")
    if not code.strip():
        raise NoCandidateError("extracted code block is empty")
    return CandidateBody(body_text=code, attempt_index=attempt_index)
