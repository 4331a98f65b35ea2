"""Gateway to text-generation and moderation backends.

One client fronts either a real chat-completion HTTP provider or a
deterministic scripted mock. Each pipeline stage has fixed decoding
parameters; every successful call lands in an exact-decimal cost ledger.
Transient backend failures are retried with exponential backoff up to a
configured cap and every attempt is recorded.
"""
from __future__ import annotations

import ast
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Optional, Protocol, Sequence, Union

import httpx

logger = logging.getLogger(__name__)

Stage = str  # create | refine | distract | verify | eval

# Decoding parameters per stage: (temperature, top_p, seed). Verification
# and evaluation run fully greedy.
STAGE_PARAMS: dict[str, tuple[float, float, int]] = {
    "create": (0.0, 0.0, 0),
    "refine": (0.7, 0.5, 0),
    "distract": (1.2, 0.7, 0),
    "verify": (0.0, 0.0, 0),
    "eval": (0.0, 0.0, 0),
}


class LmError(Exception):
    """Base class for gateway errors."""


class TransientLmError(LmError):
    """Retryable failure (timeouts, 5xx, rate limits)."""


class FatalLmError(LmError):
    """Non-retryable failure (authentication, bad configuration)."""


class GenerationFailed(LmError):
    """Retries exhausted for one request; carries the request tag."""

    def __init__(self, stage: str, tag: str, cause: Exception | None = None):
        super().__init__(f"generation failed for stage={stage} tag={tag}: {cause}")
        self.stage = stage
        self.tag = tag
        self.cause = cause


@dataclass
class GenerationRequest:
    stage: Stage
    language: str
    prompt: str
    temperature: float = 0.0
    top_p: float = 0.0
    seed: int = 0
    structured_json: bool = False
    max_tokens: int = 256
    tag: str = ""  # caller-chosen id used for audit logs and mock scripting

    @classmethod
    def for_stage(
        cls,
        stage: Stage,
        language: str,
        prompt: str,
        *,
        tag: str = "",
        structured_json: bool = False,
        max_tokens: int = 256,
    ) -> "GenerationRequest":
        temperature, top_p, seed = STAGE_PARAMS[stage]
        return cls(
            stage=stage,
            language=language,
            prompt=prompt,
            temperature=temperature,
            top_p=top_p,
            seed=seed,
            structured_json=structured_json,
            max_tokens=max_tokens,
            tag=tag,
        )


@dataclass
class GenerationResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    backend_id: str = ""

    def __post_init__(self) -> None:
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass
class ModerationVerdict:
    flagged: bool
    categories: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.flagged != bool(self.categories):
            raise ValueError("flagged must mirror non-empty categories")


@dataclass(frozen=True)
class LedgerEntry:
    stage: str
    language: str
    prompt_tokens: int
    completion_tokens: int
    dollars: Decimal


PriceTable = dict[str, tuple[Decimal, Decimal]]  # backend id -> per-1K rates


class CostLedger:
    """Append-only token/cost log with exact decimal arithmetic."""

    def __init__(self, price_table: PriceTable | None = None) -> None:
        self.price_table: PriceTable = price_table or {}
        self.entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def add(self, stage: str, language: str, prompt_tokens: int,
            completion_tokens: int, backend_id: str) -> LedgerEntry:
        rate_p, rate_c = self.price_table.get(backend_id, (Decimal(0), Decimal(0)))
        dollars = (Decimal(prompt_tokens) * rate_p
                   + Decimal(completion_tokens) * rate_c) / Decimal(1000)
        entry = LedgerEntry(stage, language, prompt_tokens, completion_tokens, dollars)
        with self._lock:
            self.entries.append(entry)
        return entry


@dataclass
class LedgerReport:
    stage_totals: dict[str, Decimal]
    total: Decimal
    per_question: Decimal | None

    def to_dict(self) -> dict:
        out = {
            "stage_totals": {k: str(v) for k, v in sorted(self.stage_totals.items())},
            "total": str(self.total),
        }
        if self.per_question is not None:
            out["per_question"] = str(self.per_question)
        return out


def ledger_report(ledger: CostLedger, question_count: int = 0) -> LedgerReport:
    """Per-stage and per-question dollar totals, exact to the cent and below."""
    stage_totals: dict[str, Decimal] = {}
    total = Decimal(0)
    for entry in ledger.entries:
        stage_totals[entry.stage] = stage_totals.get(entry.stage, Decimal(0)) + entry.dollars
        total += entry.dollars
    per_question = None
    if question_count > 0:
        per_question = (total / Decimal(question_count)).quantize(Decimal("0.000001"))
    return LedgerReport(stage_totals, total, per_question)


class Backend(Protocol):
    backend_id: str

    def generate(self, request: GenerationRequest) -> GenerationResponse: ...

    def moderate(self, text: str) -> ModerationVerdict: ...


@dataclass
class AttemptRecord:
    stage: str
    tag: str
    attempts: int
    ok: bool


class LmClient:
    """Retry, ledger, and audit wrapper around a backend.

    Safe for concurrent callers; ledger appends and attempt logging are
    serialized. Callers must not rely on response arrival order.
    """

    def __init__(
        self,
        backend: Backend,
        *,
        price_table: PriceTable | None = None,
        retry_cap: int = 3,
        backoff_base: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
        strict_moderation: bool = False,
    ) -> None:
        self.backend = backend
        self.ledger = CostLedger(price_table)
        self.retry_cap = retry_cap
        self.backoff_base = backoff_base
        self.strict_moderation = strict_moderation
        self.attempt_log: list[AttemptRecord] = []
        self._sleep = sleep
        self._log_lock = threading.Lock()

    def _record(self, stage: str, tag: str, attempts: int, ok: bool) -> None:
        with self._log_lock:
            self.attempt_log.append(AttemptRecord(stage, tag, attempts, ok))

    def _with_retries(self, call: Callable[[], object], stage: str, tag: str):
        attempts = 0
        while True:
            attempts += 1
            try:
                result = call()
            except TransientLmError as exc:
                if attempts > self.retry_cap:
                    self._record(stage, tag, attempts, ok=False)
                    raise GenerationFailed(stage, tag, exc) from exc
                self._sleep(self.backoff_base * (2 ** (attempts - 1)))
                continue
            self._record(stage, tag, attempts, ok=True)
            return result

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        if not request.prompt:
            raise ValueError("empty prompt")
        response = self._with_retries(
            lambda: self.backend.generate(request), request.stage, request.tag
        )
        assert isinstance(response, GenerationResponse)
        self.ledger.add(
            request.stage,
            request.language,
            response.prompt_tokens,
            response.completion_tokens,
            response.backend_id,
        )
        return response

    def moderate(self, text: str) -> ModerationVerdict:
        if not text:
            return ModerationVerdict(False, [])
        try:
            verdict = self._with_retries(
                lambda: self.backend.moderate(text), "moderate", ""
            )
        except GenerationFailed:
            if self.strict_moderation:
                return ModerationVerdict(True, ["moderation-unavailable"])
            logger.warning("moderation backend unavailable, passing text through")
            return ModerationVerdict(False, [])
        assert isinstance(verdict, ModerationVerdict)
        return verdict


# -- structured output parsing ----------------------------------------------


def extract_json_object(text: str) -> Optional[dict]:
    """First parseable JSON (or Python-literal) object found in the text.

    Providers in JSON mode return a bare object; other outputs may wrap
    one in prose or use single quotes. Returns None when nothing parses.
    """
    spans: list[str] = []
    depth = 0
    start = -1
    for i, ch in enumerate(text):
        if ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0 and start >= 0:
                spans.append(text[start : i + 1])
    for span in spans:
        try:
            obj = json.loads(span)
        except ValueError:
            try:
                obj = ast.literal_eval(span)
            except (ValueError, SyntaxError):
                continue
        if isinstance(obj, dict):
            return obj
    return None


# -- backends ----------------------------------------------------------------


class MockBackend:
    """Deterministic scripted backend for offline runs and tests.

    Responses are keyed by (stage, tag); a key may map to a single string
    or a list consumed call by call (the last item repeats). Unscripted
    requests fall through to the `default` callable. `failures` injects N
    transient errors before a key's first success, for retry testing.
    Every request is recorded in arrival order.
    """

    backend_id = "mock"

    def __init__(
        self,
        script: dict[tuple[str, str], Union[str, Sequence[str]]] | None = None,
        *,
        default: Callable[[GenerationRequest], str] | None = None,
        failures: dict[tuple[str, str], int] | None = None,
        moderation: dict[str, list[str]] | None = None,
        token_counts: tuple[int, int] = (0, 0),
    ) -> None:
        self._script: dict[tuple[str, str], list[str]] = {}
        for key, value in (script or {}).items():
            self._script[key] = [value] if isinstance(value, str) else list(value)
        self._cursor: dict[tuple[str, str], int] = {}
        self.default = default
        self.failures = dict(failures or {})
        self.moderation_table = dict(moderation or {})
        self.token_counts = token_counts
        self.requests: list[GenerationRequest] = []
        self._lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        key = (request.stage, request.tag)
        with self._lock:
            self.requests.append(request)
            if self.failures.get(key, 0) > 0:
                self.failures[key] -= 1
                raise TransientLmError(f"scripted failure for {key}")
            if key in self._script:
                responses = self._script[key]
                idx = self._cursor.get(key, 0)
                text = responses[min(idx, len(responses) - 1)]
                self._cursor[key] = idx + 1
            elif self.default is not None:
                text = self.default(request)
            else:
                raise FatalLmError(f"no scripted response for {key}")
        p_tok, c_tok = self.token_counts
        return GenerationResponse(text, p_tok, c_tok, self.backend_id)

    def moderate(self, text: str) -> ModerationVerdict:
        categories = self.moderation_table.get(text, [])
        return ModerationVerdict(bool(categories), list(categories))


def _stable_digest(tag: str) -> str:
    return hashlib.md5(tag.encode("utf-8")).hexdigest()


def demo_default(request: GenerationRequest) -> str:
    """Deterministic plausible behavior for every stage, keyed on the tag.

    Created questions mention only an opaque token (never the choice
    terms); a quarter of refine calls rewrite; distractors are synthetic
    and collision-free; verification picks a pseudo-random letter.
    """
    digest = _stable_digest(f"{request.stage}|{request.tag}")
    if request.stage == "create":
        return f"Which option belongs with group {digest[:8]}?"
    if request.stage == "refine":
        question = request.prompt.rsplit("\n\n", 1)[-1].strip()
        if int(digest[:8], 16) % 4 == 0:
            return f"In short, {question[:1].lower()}{question[1:]}"
        return question
    if request.stage == "distract":
        return json.dumps(
            {"additional_choice": [f"option {digest[:6]}x", f"option {digest[:6]}y"]}
        )
    if request.stage in ("verify", "eval"):
        letter = "ABCDE"[int(digest[8:16], 16) % 5]
        return json.dumps({"answer": letter})
    raise FatalLmError(f"unknown stage {request.stage}")


def demo_backend() -> MockBackend:
    """Offline backend with the demo behavior for CLI dry runs."""
    return MockBackend(default=demo_default)


class HttpBackend:
    """Chat-completion style JSON-over-HTTP backend.

    The provider is configurable by base URL and model id; requests and
    responses are logged with the API key redacted.
    """

    def __init__(
        self,
        *,
        base_url: str,
        model: str,
        api_key: str = "",
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ) -> None:
        if not base_url or not model:
            raise FatalLmError("backend needs a base URL and a model id")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.backend_id = model
        self._client = client or httpx.Client(timeout=timeout)

    @classmethod
    def from_env(cls, env: dict[str, str] | None = None) -> "HttpBackend":
        env = env if env is not None else dict(os.environ)
        return cls(
            base_url=env.get("QAFORGE_BASE_URL", ""),
            model=env.get("QAFORGE_MODEL", ""),
            api_key=env.get("QAFORGE_API_KEY", ""),
        )

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        logger.debug("POST %s %s", path, json.dumps(payload)[:500])
        try:
            response = self._client.post(
                f"{self.base_url}{path}", json=payload, headers=self._headers()
            )
        except httpx.HTTPError as exc:
            raise TransientLmError(f"transport error: {exc}") from exc
        if response.status_code in (401, 403):
            raise FatalLmError(f"authentication failed ({response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientLmError(f"backend status {response.status_code}")
        if response.status_code >= 400:
            raise FatalLmError(
                f"backend rejected request ({response.status_code}): {response.text[:200]}"
            )
        logger.debug("response %s %s", path, response.text[:500])
        return response.json()

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        payload: dict = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "seed": request.seed,
            "max_tokens": request.max_tokens,
        }
        if request.structured_json:
            payload["response_format"] = {"type": "json_object"}
        data = self._post("/chat/completions", payload)
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransientLmError(f"malformed backend response: {exc}") from exc
        usage = data.get("usage", {})
        return GenerationResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            backend_id=self.backend_id,
        )

    def moderate(self, text: str) -> ModerationVerdict:
        data = self._post("/moderations", {"input": text})
        try:
            result = data["results"][0]
            flagged = bool(result["flagged"])
            categories = sorted(
                name for name, hit in result.get("categories", {}).items() if hit
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise TransientLmError(f"malformed moderation response: {exc}") from exc
        if flagged and not categories:
            categories = ["unspecified"]
        return ModerationVerdict(flagged, categories)


def load_price_table(path: str | os.PathLike) -> PriceTable:
    """Price table JSON: {backend_id: {"prompt": "0.001", "completion": "0.002"}}."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    table: PriceTable = {}
    for backend_id, rates in raw.items():
        table[backend_id] = (Decimal(str(rates["prompt"])), Decimal(str(rates["completion"])))
    return table
