"""Shared HTTP plumbing for the remote embedding and chat backends.

One retry policy covers both: up to 5 attempts, exponential backoff with
delays 0.5 * 2**(attempt-1) seconds, retrying on transport errors,
timeouts, 429 and 5xx. API keys come from the environment and are never
echoed into errors or logs.
"""

from __future__ import annotations

import os
import re
import time
from typing import Any, Callable, Optional

import requests

MAX_ATTEMPTS = 5
BACKOFF_BASE_SECONDS = 0.5
BACKOFF_FACTOR = 2.0


class TransportError(RuntimeError):
    """Remote request failed after exhausting retries."""

    def __init__(self, message: str, attempts: int = 0, status: Optional[int] = None):
        super().__init__(message)
        self.attempts = attempts
        self.status = status


class MissingApiKey(TransportError):
    pass


def backoff_delays(attempts: int = MAX_ATTEMPTS):
    """Delays slept between attempt n and n+1 (length attempts - 1)."""
    return [BACKOFF_BASE_SECONDS * BACKOFF_FACTOR**i for i in range(attempts - 1)]


def resolve_api_key(key_env: Optional[str]) -> Optional[str]:
    if not key_env:
        return None
    value = os.environ.get(key_env)
    if not value:
        raise MissingApiKey(f"environment variable {key_env!r} is not set")
    return value


def post_json(
    url: str,
    body: dict,
    *,
    api_key: Optional[str] = None,
    timeout: float = 60.0,
    sleep: Optional[Callable[[float], None]] = None,
    post: Optional[Callable[..., Any]] = None,
) -> tuple[dict, int]:
    """POST a JSON body, retrying per the module policy.

    Returns (parsed response body, attempts used). ``sleep`` and ``post``
    are injectable for tests. The key value is never interpolated into
    error messages.
    """
    if sleep is None:
        sleep = time.sleep
    if post is None:
        post = requests.post
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    last_error = "no attempt made"
    last_status: Optional[int] = None
    for attempt in range(1, MAX_ATTEMPTS + 1):
        try:
            resp = post(url, json=body, headers=headers, timeout=timeout)
            status = getattr(resp, "status_code", 0)
            if status == 429 or status >= 500:
                last_error = f"status {status}"
                last_status = status
            elif status >= 400:
                raise TransportError(
                    f"request to {url} failed with status {status}",
                    attempts=attempt,
                    status=status,
                )
            else:
                try:
                    return resp.json(), attempt
                except ValueError:
                    last_error = "malformed JSON body"
                    last_status = status
        except requests.RequestException as exc:
            last_error = f"transport error: {type(exc).__name__}"
            last_status = None
        if attempt < MAX_ATTEMPTS:
            sleep(BACKOFF_BASE_SECONDS * BACKOFF_FACTOR ** (attempt - 1))
    raise TransportError(
        f"request to {url} failed after {MAX_ATTEMPTS} attempts ({last_error})",
        attempts=MAX_ATTEMPTS,
        status=last_status,
    )


_PATH_TOKEN = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)|\[(\d+|\*)\]")


def parse_path(path: str):
    """Parse a dotted path like ``data[*].embedding`` into steps.

    Steps are field names, integer indices, or ``"*"`` for "each element".
    """
    steps = []
    for part in path.split("."):
        pos = 0
        for match in _PATH_TOKEN.finditer(part):
            if match.start() != pos:
                raise ValueError(f"bad path segment {part!r} in {path!r}")
            pos = match.end()
            name, idx = match.groups()
            if name is not None:
                steps.append(name)
            elif idx == "*":
                steps.append("*")
            else:
                steps.append(int(idx))
        if pos != len(part):
            raise ValueError(f"bad path segment {part!r} in {path!r}")
    return steps


def extract_path(obj: Any, path: str) -> Any:
    """Pull a value out of a decoded JSON body by dotted path.

    A ``[*]`` step maps the remaining path over a list. Raises KeyError /
    IndexError / TypeError on shape mismatches.
    """
    steps = parse_path(path)

    def walk(node: Any, remaining) -> Any:
        if not remaining:
            return node
        step, rest = remaining[0], remaining[1:]
        if step == "*":
            if not isinstance(node, list):
                raise TypeError(f"expected a list at [*] in {path!r}")
            return [walk(item, rest) for item in node]
        if isinstance(step, int):
            return walk(node[step], rest)
        return walk(node[step], rest)

    return walk(obj, steps)
