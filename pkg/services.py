"""Clients for the external models behind scoring, back translation and
contextual infill, with stub clients and an on-disk response cache."""
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from typing import Any, Dict, Optional, Sequence

import requests

from errors import BackendError, DataError, UsageError

logger = logging.getLogger(__name__)

HEADERS = {
    "Content-Type": "application/json"
}

LANGUAGE_NAMES = {
    "en": "English", "de": "German", "fr": "French", "es": "Spanish",
    "it": "Italian", "ru": "Russian", "ja": "Japanese", "zh": "Chinese",
}


# --- HTTP helper ---
def post_json(url: str, payload: Dict[str, Any], timeout: float = 30.0, max_retries: int = 3,
              backoff: float = 1.0) -> Dict[str, Any]:
    """POST a JSON body and return the decoded JSON response

    429 responses wait for Retry-After (or the backoff); other failures are
    retried with exponential backoff until max_retries is exhausted."""
    last_error = ""
    for attempt in range(max_retries + 1):
        delay = backoff * (2 ** attempt)
        try:
            response = requests.post(url, headers=HEADERS, json=payload, timeout=timeout)
        except requests.RequestException as e:
            last_error = f"request failed: {e}"
        else:
            if response.status_code == 200:
                try:
                    body = response.json()
                except ValueError:
                    last_error = "malformed JSON body"
                else:
                    if isinstance(body, dict):
                        return body
                    last_error = "response body is not an object"
            elif response.status_code == 429:
                last_error = "rate limited"
                retry_after = response.headers.get("Retry-After", "")
                if retry_after.strip().isdigit():
                    delay = float(retry_after)
            else:
                last_error = f"HTTP {response.status_code}: {response.text[:200]}"
        if attempt < max_retries:
            logger.warning(f"{url}: {last_error}; retrying in {delay:.1f}s ({attempt + 1}/{max_retries})")
            time.sleep(delay)
    raise BackendError(f"{url}: {last_error} after {max_retries + 1} attempts")


# --- Response cache ---
class ResponseCache:
    """Content-addressed JSON files; writes are atomic renames"""

    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)

    def _path(self, namespace: str, payload: Any) -> str:
        key = json.dumps([namespace, payload], sort_keys=True, ensure_ascii=False)
        digest = hashlib.sha256(key.encode("utf-8")).hexdigest()
        return os.path.join(self.directory, digest[:2], f"{digest}.json")

    def get(self, namespace: str, payload: Any) -> Optional[Any]:
        path = self._path(namespace, payload)
        if not os.path.exists(path):
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)["response"]
        except (OSError, ValueError, KeyError) as e:
            logger.debug(f"Ignoring unreadable cache entry {path}: {e}")
            return None

    def put(self, namespace: str, payload: Any, response: Any) -> None:
        path = self._path(namespace, payload)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        fd, tmp_path = tempfile.mkstemp(dir=os.path.dirname(path), suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump({"namespace": namespace, "response": response}, f, ensure_ascii=False, sort_keys=True)
        os.replace(tmp_path, path)


class _CachedClient:
    namespace = ""

    def __init__(self, cache: Optional[ResponseCache] = None, concurrency: int = 4):
        self.cache = cache
        self._slots = threading.BoundedSemaphore(max(1, concurrency))

    def _cached(self, payload: Dict[str, Any], compute) -> Any:
        if self.cache is not None:
            hit = self.cache.get(self.namespace, payload)
            if hit is not None:
                return hit
        with self._slots:
            response = compute()
        if self.cache is not None:
            self.cache.put(self.namespace, payload, response)
        return response


def load_rewrite_table(path: str) -> Dict[str, str]:
    """``source<TAB>rewrite`` lines for the dictionary stubs"""
    if not os.path.exists(path):
        raise DataError(f"Rewrite table not found: {path}")
    table = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip() or line.startswith("#"):
                continue
            source, _, rewrite = line.rstrip("\n").partition("\t")
            if rewrite:
                table[" ".join(source.split())] = rewrite.strip()
    return table


# --- Translation ---
class TranslationClient:
    """Round trip source -> pivot -> source"""

    def round_trip(self, text: str) -> str:
        raise NotImplementedError


class IdentityTranslationClient(TranslationClient):
    def round_trip(self, text: str) -> str:
        return text


class DictionaryTranslationClient(TranslationClient):
    """Looks up fixed paraphrases; unknown sentences come back unchanged"""

    def __init__(self, table: Dict[str, str]):
        self.table = table

    def round_trip(self, text: str) -> str:
        return self.table.get(" ".join(text.split()), text)


class ServiceTranslationClient(_CachedClient, TranslationClient):
    namespace = "translate"

    def __init__(self, endpoint: str, source_lang: str = "en", pivot_lang: str = "de",
                 cache: Optional[ResponseCache] = None, timeout: float = 30.0,
                 max_retries: int = 3, concurrency: int = 4):
        super().__init__(cache, concurrency)
        if not endpoint:
            raise BackendError("Translation service endpoint is not configured")
        self.url = endpoint.rstrip("/") + "/v1/translate"
        self.source_lang = source_lang
        self.pivot_lang = pivot_lang
        self.timeout = timeout
        self.max_retries = max_retries

    def round_trip(self, text: str) -> str:
        payload = {"text": text, "source_lang": self.source_lang, "pivot_lang": self.pivot_lang}

        def call():
            body = post_json(self.url, payload, self.timeout, self.max_retries)
            if not isinstance(body.get("text"), str):
                raise BackendError(f"{self.url}: response without 'text'")
            return body["text"]

        return self._cached(payload, call)


class OpenAITranslationClient(_CachedClient, TranslationClient):
    """Back translation through two chat completions"""
    namespace = "translate-openai"

    def __init__(self, api_key: Optional[str], model: str = "gpt-4o-mini", source_lang: str = "en",
                 pivot_lang: str = "de", cache: Optional[ResponseCache] = None, concurrency: int = 4):
        super().__init__(cache, concurrency)
        from openai import OpenAI

        if not api_key:
            raise BackendError("OPENAI_API_KEY is not set")
        self.client = OpenAI(api_key=api_key)
        self.model = model
        self.source_lang = source_lang
        self.pivot_lang = pivot_lang

    def _translate(self, text: str, source: str, target: str) -> str:
        prompt = (
            f"Translate the following text from {LANGUAGE_NAMES.get(source, source)} "
            f"to {LANGUAGE_NAMES.get(target, target)}. Respond with ONLY the translation.\n\n{text}"
        )
        try:
            response = self.client.chat.completions.create(
                model=self.model,
                messages=[{"role": "user", "content": prompt}],
                temperature=0,
            )
        except Exception as e:
            raise BackendError(f"OpenAI translation failed: {e}")
        return (response.choices[0].message.content or "").strip()

    def round_trip(self, text: str) -> str:
        payload = {"text": text, "source_lang": self.source_lang, "pivot_lang": self.pivot_lang,
                   "model": self.model}

        def call():
            pivot = self._translate(text, self.source_lang, self.pivot_lang)
            return self._translate(pivot, self.pivot_lang, self.source_lang)

        return self._cached(payload, call)


# --- Contextual infill ---
class InfillClient:
    """Contextual word for a position: ``replace`` swaps it, ``insert`` goes after it"""

    def infill(self, tokens: Sequence[str], position: int, mode: str) -> str:
        raise NotImplementedError


class IdentityInfillClient(InfillClient):
    def infill(self, tokens: Sequence[str], position: int, mode: str) -> str:
        return tokens[position]


class DictionaryInfillClient(InfillClient):
    def __init__(self, table: Dict[str, str]):
        self.table = table

    def infill(self, tokens: Sequence[str], position: int, mode: str) -> str:
        word = tokens[position]
        return self.table.get(word.lower(), self.table.get(word.strip(".,!?").lower(), word))


class ServiceInfillClient(_CachedClient, InfillClient):
    namespace = "infill"

    def __init__(self, endpoint: str, cache: Optional[ResponseCache] = None, timeout: float = 30.0,
                 max_retries: int = 3, concurrency: int = 4):
        super().__init__(cache, concurrency)
        if not endpoint:
            raise BackendError("Infill service endpoint is not configured")
        self.url = endpoint.rstrip("/") + "/v1/infill"
        self.timeout = timeout
        self.max_retries = max_retries

    def infill(self, tokens: Sequence[str], position: int, mode: str) -> str:
        payload = {"tokens": list(tokens), "position": position, "mode": mode}

        def call():
            body = post_json(self.url, payload, self.timeout, self.max_retries)
            word = body.get("word")
            if not isinstance(word, str) or not word.strip():
                raise BackendError(f"{self.url}: response without 'word'")
            return word.strip()

        return self._cached(payload, call)


def make_translation_client(settings, source_lang: str, pivot_lang: str, api_key: Optional[str],
                            cache: Optional[ResponseCache]) -> TranslationClient:
    kind = settings.kind
    if kind == "identity":
        return IdentityTranslationClient()
    if kind == "dictionary":
        if not settings.table:
            raise DataError("translation.table is required for the dictionary client")
        return DictionaryTranslationClient(load_rewrite_table(settings.table))
    if kind == "service":
        return ServiceTranslationClient(settings.endpoint, source_lang, pivot_lang, cache,
                                        settings.timeout, settings.max_retries, settings.concurrency)
    if kind == "openai":
        return OpenAITranslationClient(api_key, settings.model, source_lang, pivot_lang, cache,
                                       settings.concurrency)
    raise UsageError(f"Unknown translation client '{kind}'")


def make_infill_client(settings, cache: Optional[ResponseCache]) -> InfillClient:
    kind = settings.kind
    if kind == "identity":
        return IdentityInfillClient()
    if kind == "dictionary":
        if not settings.table:
            raise DataError("infill.table is required for the dictionary client")
        return DictionaryInfillClient({k.lower(): v for k, v in load_rewrite_table(settings.table).items()})
    if kind == "service":
        return ServiceInfillClient(settings.endpoint, cache, settings.timeout, settings.max_retries,
                                   settings.concurrency)
    raise UsageError(f"Unknown infill client '{kind}'")
