"""Host for external evaluator processes speaking line-delimited JSON.

Each child process is one connection with at most one request in flight;
parallelism comes from running several connections. Requests and responses
are correlated by id. A connection that times out, emits garbage, or exits
is dropped; the search keeps going on whichever connections remain.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import threading
from typing import Any

from ..space import ModelConfig, ModelGeometry
from .base import EvaluatorError, EvaluatorMeta

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 600.0


class ProtocolError(EvaluatorError):
    """The child broke the wire contract (bad JSON, wrong id, missing field)."""


class EvaluatorUnavailable(RuntimeError):
    """No live evaluator connection remains; the run cannot continue."""


class _Connection:
    def __init__(self, argv: list[str]):
        self.proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=None,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self.alive = True

    def _read_loop(self) -> None:
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, payload: dict[str, Any], timeout: float) -> dict[str, Any]:
        assert self.proc.stdin is not None
        try:
            self.proc.stdin.write(json.dumps(payload) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"evaluator process rejected the request: {exc}") from exc
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError(f"no response within {timeout}s for id {payload['id']}") from None
        if line is None:
            raise ProtocolError("evaluator process closed its output")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            logger.error("malformed evaluator response: %r", line)
            raise ProtocolError(f"response is not valid JSON: {exc}") from exc
        if not isinstance(response, dict) or response.get("id") != payload["id"]:
            logger.error("mismatched evaluator response: %r", line)
            raise ProtocolError(
                f"response id {response.get('id') if isinstance(response, dict) else None} "
                f"does not match request id {payload['id']}"
            )
        return response

    def close(self) -> None:
        self.alive = False
        if self.proc.poll() is None:
            try:
                if self.proc.stdin is not None:
                    self.proc.stdin.close()
                self.proc.terminate()
                self.proc.wait(timeout=5)
            except Exception:
                self.proc.kill()


class ExternalEvaluator:
    """Evaluator backed by one or more child processes."""

    def __init__(
        self,
        command: str | list[str],
        connections: int = 1,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        if connections < 1:
            raise ValueError("connections must be >= 1")
        self._argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._timeout = timeout
        self._pool: queue.Queue[_Connection] = queue.Queue()
        self._all: list[_Connection] = []
        for _ in range(connections):
            conn = _Connection(self._argv)
            self._all.append(conn)
            self._pool.put(conn)
        self._id_lock = threading.Lock()
        self._next_id = 0
        self._meta: EvaluatorMeta | None = None

    def _take_id(self) -> int:
        with self._id_lock:
            self._next_id += 1
            return self._next_id

    def _acquire(self) -> _Connection:
        while True:
            try:
                conn = self._pool.get(timeout=self._timeout)
            except queue.Empty:
                raise EvaluatorUnavailable("timed out waiting for a free evaluator connection")
            if conn.alive and conn.proc.poll() is None:
                return conn
            conn.close()
            self._all.remove(conn)
            if not self._all:
                raise EvaluatorUnavailable("all evaluator connections have exited")

    def _drop(self, conn: _Connection) -> None:
        conn.close()
        if conn in self._all:
            self._all.remove(conn)

    def _request(self, payload: dict[str, Any]) -> dict[str, Any]:
        while True:
            if not self._all:
                raise EvaluatorUnavailable("all evaluator connections have exited")
            conn = self._acquire()
            try:
                response = conn.request(payload, self._timeout)
            except TimeoutError as exc:
                # A late reply would desync ids, so the connection goes too.
                self._drop(conn)
                raise EvaluatorError(str(exc)) from exc
            except ProtocolError:
                self._drop(conn)
                if self._all:
                    continue
                raise
            self._pool.put(conn)
            if response.get("ok") is not True:
                raise EvaluatorError(str(response.get("error", "evaluator reported failure")))
            return response

    def meta(self) -> EvaluatorMeta:
        if self._meta is None:
            response = self._request({"id": self._take_id(), "type": "meta"})
            try:
                meta = response["meta"]
                geometry = ModelGeometry.from_dict({"layers": meta["geometry"]})
                self._meta = EvaluatorMeta(
                    layers=int(meta["layers"]),
                    calib_size=int(meta["calib_size"]),
                    geometry=geometry,
                )
            except (KeyError, TypeError, ValueError) as exc:
                logger.error("malformed meta response: %r", response)
                raise ProtocolError(f"bad meta response: {exc}") from exc
            if self._meta.layers != len(self._meta.geometry):
                raise ProtocolError("meta layer count disagrees with geometry length")
        return self._meta

    def evaluate(self, config: ModelConfig, proxy_steps: int) -> float:
        response = self._request(
            {
                "id": self._take_id(),
                "type": "evaluate",
                "config": config.to_wire(),
                "proxy_steps": proxy_steps,
            }
        )
        performance = response.get("performance")
        if not isinstance(performance, (int, float)):
            logger.error("malformed evaluate response: %r", response)
            raise ProtocolError("evaluate response lacks a numeric 'performance'")
        return float(performance)

    def distribution(
        self,
        calib_index: int,
        perturbed_layer: int | None = None,
        perturb_bit: int | None = None,
    ) -> list[float]:
        payload: dict[str, Any] = {
            "id": self._take_id(),
            "type": "distribution",
            "calib_index": calib_index,
        }
        if perturbed_layer is not None:
            payload["layer"] = perturbed_layer
        if perturb_bit is not None:
            payload["bit"] = perturb_bit
        response = self._request(payload)
        dist = response.get("dist")
        if not isinstance(dist, list) or not all(isinstance(x, (int, float)) for x in dist):
            logger.error("malformed distribution response: %r", response)
            raise ProtocolError("distribution response lacks a numeric 'dist' list")
        return [float(x) for x in dist]

    def close(self) -> None:
        for conn in self._all:
            conn.close()
        self._all.clear()

    def __enter__(self) -> ExternalEvaluator:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
