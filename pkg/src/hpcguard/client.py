"""Thin client for the service endpoints.

By default requests are dispatched in-process over an ASGI transport,
so the CLI works with no running server and stays deterministic; pass
a base URL to talk to a remote instance instead. Service error
envelopes are translated back into the package's exception types:
data_error -> DataError, divergence -> DivergenceError, and request
validation failures (HTTP 422) -> RequestRejected.
"""

from __future__ import annotations

import asyncio
import json

import httpx

from .errors import DataError, DivergenceError


class RequestRejected(Exception):
    """The service refused the request shape (HTTP 422)."""


class ServiceError(Exception):
    """Unexpected service failure (transport problem or 5xx)."""


def _raise_for(response: httpx.Response) -> dict:
    if response.status_code == 200:
        return response.json()
    if response.status_code == 422:
        raise RequestRejected(_describe_422(response))
    if response.status_code == 400:
        try:
            detail = response.json().get("detail", {})
        except json.JSONDecodeError:
            detail = {}
        code = detail.get("code")
        message = detail.get("message", response.text)
        if code == "divergence":
            raise DivergenceError(message)
        raise DataError(message)
    raise ServiceError(f"HTTP {response.status_code}: {response.text[:500]}")


def _describe_422(response: httpx.Response) -> str:
    try:
        detail = response.json().get("detail")
    except json.JSONDecodeError:
        return response.text[:500]
    if isinstance(detail, list):
        parts = []
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []) if p != "body")
            parts.append(f"{loc}: {item.get('msg', 'invalid')}")
        return "; ".join(parts) or "invalid request"
    return str(detail)


class ServiceClient:
    """One-shot JSON calls against a local or remote service."""

    def __init__(self, server: str | None = None):
        self.server = server.rstrip("/") if server else None

    async def _request(self, method: str, path: str, payload: dict | None) -> dict:
        if self.server is None:
            from .service.app import create_app

            transport = httpx.ASGITransport(app=create_app())
            async with httpx.AsyncClient(
                transport=transport, base_url="http://hpcguard.internal", timeout=None
            ) as client:
                response = await client.request(method, path, json=payload)
        else:
            async with httpx.AsyncClient(base_url=self.server, timeout=None) as client:
                response = await client.request(method, path, json=payload)
        return _raise_for(response)

    def call(self, method: str, path: str, payload: dict | None = None) -> dict:
        try:
            return asyncio.run(self._request(method, path, payload))
        except httpx.HTTPError as e:
            raise ServiceError(f"transport failure: {e}") from None
