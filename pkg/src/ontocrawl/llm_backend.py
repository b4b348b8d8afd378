"""Chat-completion oracle: prompt templates, sampling, parsing, caching, cost.

The wire protocol is a plain chat-completions POST carrying one user message.
Listing uses first-token frequency sampling: the listing prompt is sampled
``n_samples`` times with ``max_tokens=1`` at high temperature, and every first
token reaching the frequency threshold spawns a full listing prompt forced to
start with that token.  All other prompts run at temperature 0 and are served
from a content-addressed cache when possible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

from .errors import (
    InvalidInputError,
    OracleParseError,
    TemplateError,
    TransportError,
)
from .hierarchy import normalize_name
from .oracle import OracleContext, QueryLog

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-3.5-turbo"
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"

# Price per single token (prompt, completion), by model.
DEFAULT_PRICE_TABLE: dict[str, tuple[float, float]] = {
    "gpt-3.5-turbo": (0.0015e-3, 0.002e-3),
    "gpt-4": (0.03e-3, 0.06e-3),
}


@dataclass(frozen=True)
class PromptTemplate:
    """A named prompt body with placeholder slots.

    ``concept_slots`` lists, in order of appearance, the placeholders whose
    bound values are concept names; their stored descriptions get appended as
    ``Name: description.`` lines.  ``context_prefix`` marks templates that
    carry the two discovery-context sentences.
    """

    name: str
    body: str
    concept_slots: tuple[str, ...] = ()
    context_prefix: bool = False


CONTEXT_SENTENCE_PARENT = "{D} is a subcategory of {C0}."
CONTEXT_SENTENCE_SELF = "{C} is a subcategory of {D}."

TEMPLATES: dict[str, PromptTemplate] = {
    t.name: t
    for t in (
        PromptTemplate(
            "existence",
            "Are there any generally accepted subcategories of {C}? "
            "Answer only with yes or no.",
            concept_slots=("D", "C0", "C"),
            context_prefix=True,
        ),
        PromptTemplate(
            "listing",
            "List all of the most important subcategories of {C}. "
            "Skip explanations and use a comma-separated format like this: "
            "important subcategory, another important subcategory, "
            "another important subcategory, etc.",
            concept_slots=("D", "C0", "C"),
            context_prefix=True,
        ),
        PromptTemplate(
            "listing_continuation",
            "List all of the most important subcategories of {C}. "
            "Skip explanations and use a comma-separated format like this: "
            "important subcategory, another important subcategory, "
            "another important subcategory, etc. "
            'Start your answer with "{t}".',
            concept_slots=("D", "C0", "C"),
            context_prefix=True,
        ),
        PromptTemplate(
            "description",
            "Give a brief description of every term on the list, considered "
            "as a subcategory of {C}, without the use of examples, in the "
            "following form: List element 1: brief description for list "
            "element 1. List element 2: brief description for list element 2. "
            "...\n{terms}",
            concept_slots=("C",),
        ),
        PromptTemplate(
            "verify_instance",
            "Is {D} a specific instance or a subcategory of the category {C0}? "
            "Answer only with Instance or Subcategory.",
            concept_slots=("D", "C0"),
        ),
        PromptTemplate(
            "verify_part",
            "Is {D} a part or a subcategory of the category {C0}? "
            "Answer only with Part or Subcategory.",
            concept_slots=("D", "C0"),
        ),
        PromptTemplate(
            "verify_seed",
            "Can {D} be considered a subcategory of {C0}? "
            "Answer only with yes or no.",
            concept_slots=("D", "C0"),
        ),
        PromptTemplate(
            "verify_subcat",
            "{C} is a subcategory of {C0}. Is {D} typically understood as a "
            "subcategory of {C}? Answer only with yes or no.",
            concept_slots=("C", "C0", "D"),
        ),
        PromptTemplate(
            "rename",
            "{C} is a subcategory of {C0}. The following description outlines "
            "the characteristics of a subcategory of {C}. Provide a concise "
            "and unambiguous name for it. Provide only the name without any "
            "explanation.\n{description}",
            concept_slots=("C", "C0"),
        ),
        PromptTemplate(
            "synonym_interchangeable",
            "In the context of {C0}, are {D1} and {D2} typically used "
            "interchangeably? Answer only with yes or no.",
            concept_slots=("C0", "D1", "D2"),
        ),
        PromptTemplate(
            "synonym_direction",
            "Consider the terms {D1} and {D2}. Which of the terms is a "
            "subcategory of the other one? Answer in the following scheme: "
            "[[X]] is a subcategory of [[Y]].",
            concept_slots=("D1", "D2"),
        ),
    )
}

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z0-9_]+)\}")


def render(
    template_name: str,
    bindings: dict[str, str],
    ctx: OracleContext | None = None,
) -> str:
    """Substitute ``bindings`` into a template and append known descriptions.

    The discovery-context sentences degenerate at the top of the hierarchy and
    are dropped there: the first when D coincides with the seed, both when C
    itself is the seed.
    """
    if template_name not in TEMPLATES:
        raise TemplateError(f"unknown template {template_name!r}")
    tpl = TEMPLATES[template_name]
    body = tpl.body
    if tpl.context_prefix:
        c0 = bindings.get("C0", "")
        c = bindings.get("C", "")
        d = bindings.get("D")
        sentences = []
        if d and normalize_name(c) != normalize_name(c0):
            if normalize_name(d) != normalize_name(c0):
                sentences.append(CONTEXT_SENTENCE_PARENT)
            sentences.append(CONTEXT_SENTENCE_SELF)
        body = "".join(s + " " for s in sentences) + body

    slots = set(_PLACEHOLDER_RE.findall(body))
    missing = [s for s in sorted(slots) if s not in bindings or bindings[s] is None]
    if missing:
        raise TemplateError(
            f"template {template_name!r} is missing bindings for {missing}"
        )
    prompt = body
    for slot in slots:
        prompt = prompt.replace("{" + slot + "}", str(bindings[slot]))

    if ctx is not None and ctx.descriptions:
        lines = []
        seen: set[str] = set()
        for slot in tpl.concept_slots:
            name = bindings.get(slot)
            if not name or normalize_name(name) in seen:
                continue
            seen.add(normalize_name(name))
            desc = _lookup_description(ctx, name)
            if desc:
                desc = desc.strip()
                if not desc.endswith("."):
                    desc += "."
                lines.append(f"{name}: {desc}")
        if lines:
            prompt = prompt + "\n" + "\n".join(lines)
    return prompt


def _lookup_description(ctx: OracleContext, name: str) -> str | None:
    key = normalize_name(name)
    for cand, text in ctx.descriptions.items():
        if normalize_name(cand) == key and text:
            return text
    return None


# ---------------------------------------------------------------------------
# reply parsers


def parse_csv_list(text: str) -> list[str]:
    """Split a comma-separated reply into trimmed names.

    Drops empty items and the literal "etc."; a single trailing period is
    stripped so sentence-final items survive intact.
    """
    items: list[str] = []
    for raw in text.split(","):
        item = raw.strip()
        if item.endswith(".") and not item.endswith(".."):
            item = item[:-1].rstrip() if item[:-1].strip() else item
        if not item:
            continue
        if item.casefold() in ("etc", "etc."):
            continue
        items.append(item)
    return items


_WORD_RE = re.compile(r"[A-Za-z]+")


def parse_yes_no(text: str) -> bool:
    """First alphabetic word decides; anything else is a parse error."""
    m = _WORD_RE.search(text or "")
    if m:
        word = m.group(0).casefold()
        if word == "yes":
            return True
        if word == "no":
            return False
    raise OracleParseError(f"expected yes/no, got {text!r}")


def parse_keyword(text: str, options: dict[str, bool]) -> bool:
    """Map the first alphabetic word onto one of ``options`` (case-insensitive)."""
    m = _WORD_RE.search(text or "")
    if m:
        word = m.group(0).casefold()
        if word in options:
            return options[word]
    raise OracleParseError(
        f"expected one of {sorted(options)}, got {text!r}"
    )


_BRACKETED_RE = re.compile(r"\[\[(.+?)\]\]")


def parse_direction(text: str) -> tuple[str, str]:
    """Extract (subcategory, supercategory) from a "[[X]] is a subcategory of
    [[Y]]" style reply; the two spans are taken in order of appearance."""
    spans = [s.strip() for s in _BRACKETED_RE.findall(text or "") if s.strip()]
    if len(spans) < 2:
        raise OracleParseError(f"expected two [[...]] spans, got {text!r}")
    return spans[0], spans[1]


def parse_description_lines(text: str, names: list[str]) -> dict[str, str]:
    """Match "Name: description" reply lines to the requested names.

    Names that never appear map to "" (the caller logs the gap).  Leading list
    markers like "1." or "-" before a name are tolerated.
    """
    by_key = {normalize_name(n): n for n in names}
    found: dict[str, str] = {}
    for line in (text or "").splitlines():
        line = line.strip()
        if not line or ":" not in line:
            continue
        head, _, tail = line.partition(":")
        head = re.sub(r"^\s*(?:list element\s+\d+|\d+[.)]|[-*])\s*", "", head,
                      flags=re.IGNORECASE).strip()
        key = normalize_name(head)
        if key in by_key and tail.strip():
            found.setdefault(key, tail.strip())
    return {name: found.get(normalize_name(name), "") for name in names}


def passing_tokens(frequencies: dict[str, int], ft: int) -> list[str]:
    """Tokens at or above the threshold, most frequent first (name-tiebreak)."""
    if ft < 1:
        raise InvalidInputError(f"frequency threshold must be >= 1, got {ft}")
    chosen = [(count, tok) for tok, count in frequencies.items() if count >= ft]
    return [tok for count, tok in sorted(chosen, key=lambda p: (-p[0], p[1]))]


# ---------------------------------------------------------------------------
# completion plumbing


@dataclass(frozen=True)
class CompletionParams:
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    top_p: float = 0.99
    max_tokens: int = 256

    def __post_init__(self):
        if not self.model:
            raise InvalidInputError("model must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise InvalidInputError(f"temperature out of range: {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise InvalidInputError(f"top_p out of range: {self.top_p}")
        if self.max_tokens < 1:
            raise InvalidInputError(f"max_tokens must be positive: {self.max_tokens}")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }


DEFAULT_SAMPLING_TEMPERATURE = 2.0


@dataclass
class CostLedger:
    """Accumulates request counts, token usage and spend."""

    requests: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    dollars: float = 0.0

    def add(
        self,
        prompt_tokens: int = 0,
        completion_tokens: int = 0,
        prompt_price: float = 0.0,
        completion_price: float = 0.0,
    ) -> None:
        self.requests += 1
        self.prompt_tokens += prompt_tokens
        self.completion_tokens += completion_tokens
        self.dollars += (
            prompt_tokens * prompt_price + completion_tokens * completion_price
        )

    def to_dict(self) -> dict:
        return {
            "requests": self.requests,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "dollars": self.dollars,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CostLedger":
        return cls(
            requests=int(data.get("requests", 0)),
            prompt_tokens=int(data.get("prompt_tokens", 0)),
            completion_tokens=int(data.get("completion_tokens", 0)),
            dollars=float(data.get("dollars", 0.0)),
        )


class ResponseCache:
    """Content-addressed reply cache, persisted as append-only JSONL."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._mem: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                self._mem[rec["key"]] = rec

    @staticmethod
    def key_for(prompt: str, params: CompletionParams) -> str:
        material = json.dumps(
            {"prompt": prompt, **params.to_dict()}, sort_keys=True, ensure_ascii=False
        )
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def get(self, key: str) -> dict | None:
        with self._lock:
            return self._mem.get(key)

    def put(self, key: str, record: dict) -> None:
        record = {"key": key, **record}
        with self._lock:
            self._mem[key] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._mem)


class ChatTransport(Protocol):
    def send(self, body: dict) -> dict: ...


class HttpChatTransport:
    """POSTs chat-completion request bodies; the API key comes from the
    environment and never appears in logs or config files."""

    def __init__(
        self,
        endpoint: str = DEFAULT_ENDPOINT,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 60.0,
    ):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout = timeout

    def send(self, body: dict) -> dict:
        import requests

        api_key = os.environ.get(self.api_key_env)
        if not api_key:
            raise TransportError(
                f"environment variable {self.api_key_env} is not set",
                retryable=False,
            )
        try:
            resp = requests.post(
                self.endpoint,
                json=body,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if resp.status_code != 200:
            retryable = resp.status_code in (408, 409, 429, 500, 502, 503, 504)
            raise TransportError(
                f"HTTP {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code,
                retryable=retryable,
            )
        return resp.json()


@dataclass
class CompletionResult:
    text: str
    prompt_tokens: int
    completion_tokens: int
    cached: bool = False


class ChatCompletionOracle:
    """KnowledgeOracle backed by a chat-completion endpoint.

    Retries transport failures with exponential backoff (bounded), caches
    temperature-0 replies by content hash, counts every successful request in
    the cost ledger and appends one query-log record per request.
    """

    def __init__(
        self,
        transport: ChatTransport | None = None,
        *,
        params: CompletionParams | None = None,
        sampling_temperature: float = DEFAULT_SAMPLING_TEMPERATURE,
        price_table: dict[str, tuple[float, float]] | None = None,
        cache: ResponseCache | None = None,
        query_log: QueryLog | None = None,
        ledger: CostLedger | None = None,
        max_retries: int = 5,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        max_in_flight: int = 8,
        sleep=time.sleep,
    ):
        self.transport = transport or HttpChatTransport()
        self.params = params or CompletionParams()
        self.sampling_params = replace(
            self.params, temperature=sampling_temperature, max_tokens=1
        )
        self.price_table = dict(price_table or DEFAULT_PRICE_TABLE)
        self.cache = cache or ResponseCache()
        self.query_log = query_log
        self.ledger = ledger if ledger is not None else CostLedger()
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.max_in_flight = max_in_flight
        self._sleep = sleep
        self._ledger_lock = threading.Lock()

    # -- low level ---------------------------------------------------------

    def complete(
        self,
        prompt: str,
        params: CompletionParams | None = None,
        *,
        template_name: str = "",
        use_cache: bool = True,
    ) -> CompletionResult:
        params = params or self.params
        cacheable = params.temperature == 0.0
        key = ResponseCache.key_for(prompt, params) if cacheable else None
        if cacheable and use_cache:
            hit = self.cache.get(key)
            if hit is not None:
                return CompletionResult(
                    text=hit["reply"],
                    prompt_tokens=hit.get("prompt_tokens", 0),
                    completion_tokens=hit.get("completion_tokens", 0),
                    cached=True,
                )

        body = {
            "model": params.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        last_error: TransportError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = min(self.backoff_base * 2 ** (attempt - 1), self.backoff_cap)
                self._sleep(delay)
            started = time.monotonic()
            try:
                data = self.transport.send(body)
            except TransportError as exc:
                last_error = exc
                logger.warning(
                    "completion attempt %d/%d failed: %s",
                    attempt + 1,
                    self.max_retries + 1,
                    exc,
                )
                if not exc.retryable:
                    break
                continue
            latency_ms = (time.monotonic() - started) * 1000.0
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage", {})
            pt = int(usage.get("prompt_tokens", 0))
            ct = int(usage.get("completion_tokens", 0))
            prices = self.price_table.get(params.model, (0.0, 0.0))
            with self._ledger_lock:
                self.ledger.add(pt, ct, prices[0], prices[1])
            if self.query_log is not None:
                self.query_log.record(
                    template_name=template_name,
                    prompt=prompt,
                    params=params.to_dict(),
                    reply=text,
                    prompt_tokens=pt,
                    completion_tokens=ct,
                    latency_ms=round(latency_ms, 3),
                )
            if cacheable:
                self.cache.put(
                    key,
                    {"reply": text, "prompt_tokens": pt, "completion_tokens": ct},
                )
            return CompletionResult(text=text, prompt_tokens=pt, completion_tokens=ct)
        raise last_error if last_error is not None else TransportError("request failed")

    def sample_first_tokens(
        self, prompt: str, n_samples: int, *, template_name: str = "listing"
    ) -> dict[str, int]:
        """Frequency map of first completion tokens over ``n_samples`` draws.

        Individual draws that exhaust their retries are dropped; the shortfall
        is logged rather than raised.
        """
        counts: dict[str, int] = {}
        failures = 0

        def one(_: int) -> str | None:
            try:
                return self.complete(
                    prompt, self.sampling_params, template_name=template_name
                ).text
            except TransportError:
                return None

        with ThreadPoolExecutor(max_workers=max(1, self.max_in_flight)) as pool:
            for text in pool.map(one, range(n_samples)):
                if text is None:
                    failures += 1
                    continue
                token = text.strip()
                if token:
                    counts[token] = counts.get(token, 0) + 1
        if failures:
            logger.warning(
                "first-token sampling lost %d of %d draws", failures, n_samples
            )
        return counts

    # -- contract ------------------------------------------------------------

    def _bindings(self, ctx: OracleContext, c: str) -> dict[str, str]:
        return {"C0": ctx.seed_name, "D": ctx.parent_name or ctx.seed_name, "C": c}

    def _yes_no(
        self, template_name: str, bindings: dict[str, str], ctx: OracleContext
    ) -> bool:
        return self._parsed(template_name, bindings, ctx, parse_yes_no)

    def _parsed(self, template_name, bindings, ctx, parser):
        prompt = render(template_name, bindings, ctx)
        for attempt in (0, 1):
            result = self.complete(
                prompt,
                self.params,
                template_name=template_name,
                use_cache=attempt == 0,
            )
            try:
                return parser(result.text)
            except OracleParseError as exc:
                if attempt == 0:
                    logger.warning("unparseable reply, retrying once: %s", exc)
        raise OracleParseError(f"reply to {template_name!r} unparseable after retry")

    def has_subconcepts(self, ctx: OracleContext, c: str) -> bool:
        try:
            return self._yes_no("existence", self._bindings(ctx, c), ctx)
        except OracleParseError:
            logger.warning("existence reply unparseable; treating %r as leaf", c)
            return False

    def list_subconcepts(
        self, ctx: OracleContext, c: str, ft: int, n_samples: int
    ) -> list[str]:
        if not 1 <= ft <= n_samples:
            raise InvalidInputError(
                f"ft must lie within [1, n_samples]; got ft={ft}, n_samples={n_samples}"
            )
        bindings = self._bindings(ctx, c)
        base_prompt = render("listing", bindings, ctx)
        frequencies = self.sample_first_tokens(base_prompt, n_samples)
        tokens = passing_tokens(frequencies, ft)

        collected: list[str] = []
        seen: set[str] = set()

        def absorb(reply: str) -> None:
            for name in parse_csv_list(reply):
                key = normalize_name(name)
                if key and key not in seen:
                    seen.add(key)
                    collected.append(name)

        if not tokens:
            # Fallback: one plain listing at temperature 0.
            result = self.complete(base_prompt, self.params, template_name="listing")
            absorb(result.text)
            return collected
        for token in tokens:
            prompt = render("listing_continuation", {**bindings, "t": token}, ctx)
            result = self.complete(
                prompt, self.params, template_name="listing_continuation"
            )
            absorb(result.text)
        return collected

    def describe(self, ctx: OracleContext, names: list[str]) -> dict[str, str]:
        if not names:
            return {}
        c = ctx.parent_name or ctx.seed_name
        prompt = render(
            "description", {"C": c, "terms": ", ".join(names)}, ctx
        )
        result = self.complete(prompt, self.params, template_name="description")
        parsed = parse_description_lines(result.text, names)
        for name, text in parsed.items():
            if not text:
                logger.warning("no description parsed for %r", name)
        return parsed

    def is_instance(self, ctx: OracleContext, d: str) -> bool:
        return self._parsed(
            "verify_instance",
            {"C0": ctx.seed_name, "D": d},
            ctx,
            lambda text: parse_keyword(text, {"instance": True, "subcategory": False}),
        )

    def is_part(self, ctx: OracleContext, d: str) -> bool:
        return self._parsed(
            "verify_part",
            {"C0": ctx.seed_name, "D": d},
            ctx,
            lambda text: parse_keyword(text, {"part": True, "subcategory": False}),
        )

    def under_seed(self, ctx: OracleContext, d: str) -> bool:
        return self._yes_no("verify_seed", {"C0": ctx.seed_name, "D": d}, ctx)

    def is_subcategory_of(self, ctx: OracleContext, d: str, c: str) -> bool:
        return self._yes_no(
            "verify_subcat", {"C0": ctx.seed_name, "C": c, "D": d}, ctx
        )

    def rename_from_description(
        self, ctx: OracleContext, c: str, description: str
    ) -> str | None:
        prompt = render(
            "rename",
            {"C0": ctx.seed_name, "C": c, "description": description},
            ctx,
        )
        try:
            result = self.complete(prompt, self.params, template_name="rename")
        except TransportError:
            logger.warning("rename request failed; dropping the candidate")
            return None
        text = result.text.strip()
        first_line = text.splitlines()[0] if text else ""
        # Peel interleaved quoting and a sentence period, e.g. '"Apple Tree".'
        while True:
            trimmed = first_line.strip().strip('"').strip("'")
            if trimmed.endswith("."):
                trimmed = trimmed[:-1].rstrip()
            if trimmed == first_line:
                break
            first_line = trimmed
        return first_line or None

    def interchangeable(self, ctx: OracleContext, d1: str, d2: str) -> bool:
        return self._yes_no(
            "synonym_interchangeable",
            {"C0": ctx.seed_name, "D1": d1, "D2": d2},
            ctx,
        )

    def subcategory_direction(
        self, ctx: OracleContext, d1: str, d2: str
    ) -> tuple[str, str]:
        return self._parsed(
            "synonym_direction", {"D1": d1, "D2": d2}, ctx, parse_direction
        )
