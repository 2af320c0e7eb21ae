"""Zero-shot risk classification by repeated prompting and majority voting.

Each block group is judged 40 times on independent 100-tweet samples (drawn
with replacement); a vote is high-risk only when strictly more than half the
parsed answers say so.  Unparseable completions count as low-risk answers,
biasing against false alarms.
"""
from __future__ import annotations

import json
import os
import string
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Protocol

from .seeding import rng_for

PROMPT_RESOURCE = "risk_prompt.txt"
# digest of the bundled template, pinned at vendoring time
PROMPT_TEMPLATE_SHA256 = "f31d6349dedd311796ebba1312a1cacc9dc31139cc43c057519cd849279051e3"

VOTES_PER_BG = 40
TWEETS_PER_PROMPT = 100
TOKEN_ENV_VAR = "LOCALHEALTH_API_TOKEN"

_PUNCT = string.punctuation + "‘’“”"


def load_prompt_template() -> str:
    return resources.files("localhealth").joinpath("resources").joinpath(PROMPT_RESOURCE).read_text("utf-8")


def build_prompt(tweets: list[str], adi: int) -> str:
    """Byte-exact instantiation of the bundled template.

    The tweet list is serialized as a quoted JSON array; placeholder
    substitution is plain string replacement so tweet content can never be
    interpreted as a format directive.
    """
    if len(tweets) != TWEETS_PER_PROMPT:
        raise ValueError(f"prompt needs exactly {TWEETS_PER_PROMPT} tweets, got {len(tweets)}")
    template = load_prompt_template()
    rendered_tweets = json.dumps(list(tweets), ensure_ascii=False)
    return template.replace("{tweets}", rendered_tweets).replace("{adi}", str(int(adi)))


def parse_response(raw: str) -> str:
    """First standalone 'A' or 'B' token wins (case-insensitive, punctuation-stripped)."""
    for token in raw.split():
        stripped = token.strip(_PUNCT)
        if stripped.upper() == "A":
            return "A"
        if stripped.upper() == "B":
            return "B"
    return "Unparseable"


@dataclass
class VotePacket:
    bg_id: str
    year: int
    responses: list[str]
    verdict: int

    @property
    def counts(self) -> dict[str, int]:
        return {v: self.responses.count(v) for v in ("A", "B", "Unparseable")}


class ChatClient(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


class ZeroShotTransportError(RuntimeError):
    """Transport failed after retries; carries the partial vote packet."""

    def __init__(self, message: str, packet: VotePacket):
        super().__init__(message)
        self.packet = packet


class HttpChatClient:
    """Minimal synchronous chat-completion client with bounded retry.

    The endpoint and model name come from configuration; the bearer token is
    read from the LOCALHEALTH_API_TOKEN environment variable when present.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 0.5,
    ):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff

    def complete(self, messages: list[dict]) -> str:
        payload = json.dumps({"model": self.model, "messages": messages}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(TOKEN_ENV_VAR)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                request = urllib.request.Request(self.endpoint, data=payload, headers=headers)
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    body = json.loads(response.read().decode("utf-8"))
                choice = body["choices"][0]
                if "message" in choice:
                    return choice["message"]["content"]
                return choice["text"]
            except (urllib.error.URLError, OSError, KeyError, json.JSONDecodeError) as exc:
                last_error = exc
                if attempt < self.max_retries - 1:
                    time.sleep(self.backoff * (2**attempt))
        raise ConnectionError(f"chat completion failed after {self.max_retries} attempts: {last_error}")


def classify_bg(
    cell,
    adi: int,
    client: ChatClient,
    seed: int,
    votes: int = VOTES_PER_BG,
    sample_size: int = TWEETS_PER_PROMPT,
    max_in_flight: int = 8,
) -> VotePacket:
    """Vote packet for one (bg, year) cell of tweets.

    Sampling with replacement means a single-tweet cell still yields full
    prompts.  Requests may run concurrently up to max_in_flight; the vote is
    assembled in sample order regardless of completion order.
    """
    records = list(cell)
    if not records:
        raise ValueError("cannot classify an empty cell")
    bg_id, year = records[0].bg_id, records[0].year
    texts = [t.text for t in records]
    rng = rng_for(seed, "zeroshot", bg_id, year)
    index_sets = [rng.integers(0, len(texts), size=sample_size) for _ in range(votes)]
    prompts = [build_prompt([texts[i] for i in idx], adi) for idx in index_sets]

    responses: list[str | None] = [None] * votes
    errors: list[str] = []

    def ask(i: int) -> None:
        try:
            raw = client.complete([{"role": "user", "content": prompts[i]}])
            responses[i] = parse_response(raw)
        except Exception as exc:  # noqa: BLE001 - transport boundary
            errors.append(f"request {i}: {exc}")

    if max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=min(max_in_flight, votes)) as pool:
            list(pool.map(ask, range(votes)))
    else:
        for i in range(votes):
            ask(i)

    answered = [r for r in responses if r is not None]
    n_high = sum(1 for r in answered if r == "A")
    partial = VotePacket(bg_id=bg_id, year=year, responses=answered, verdict=int(2 * n_high > votes))
    if errors:
        raise ZeroShotTransportError("; ".join(errors), partial)
    return partial


def sample_indices(texts_len: int, seed: int, bg_id: str, year: int,
                   votes: int = VOTES_PER_BG, sample_size: int = TWEETS_PER_PROMPT):
    """The exact index sets classify_bg would draw (exposed for verification)."""
    rng = rng_for(seed, "zeroshot", bg_id, year)
    return [rng.integers(0, texts_len, size=sample_size) for _ in range(votes)]
