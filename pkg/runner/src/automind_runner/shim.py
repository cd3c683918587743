"""Execution session server speaking line-delimited JSON over stdio.

One request object per stdin line, exactly one response object per stdout
line, matched by ``request_id``. Commands:

    check  parse code, report syntax validity; never executes
    exec   run a fragment in the persistent session namespace
    run    run code as a fresh isolated script
    reset  clear session state
    close  exit cleanly

Fragments execute inside a worker process so a hung fragment can be killed
and the session restarted; a timeout therefore loses session state, which
the client rebuilds by replaying its accepted fragments. Malformed request
lines get an error response and the loop continues.
"""

from __future__ import annotations

import contextlib
import io
import json
import multiprocessing
import os
import re
import subprocess
import sys
import tempfile
import time
import traceback

PROTOCOL_VERSION = 1

_REQUEST_ID_RE = re.compile(r'"request_id"\s*:\s*(-?\d+)')


def _worker_loop(conn) -> None:
    """Persistent interpreter state; one fragment per message."""
    devnull = os.open(os.devnull, os.O_WRONLY)
    os.dup2(devnull, 1)  # native-code writes must not corrupt the protocol
    os.dup2(devnull, 2)
    namespace: dict = {"__name__": "__main__"}
    while True:
        try:
            code = conn.recv()
        except (EOFError, KeyboardInterrupt):
            return
        if code is None:
            return
        buffer = io.StringIO()
        started = time.monotonic()
        ok = True
        with contextlib.redirect_stdout(buffer), contextlib.redirect_stderr(buffer):
            try:
                exec(compile(code, "<fragment>", "exec"), namespace)
            except BaseException:
                ok = False
                traceback.print_exc(file=buffer)
        conn.send(
            {
                "ok": ok,
                "output": buffer.getvalue(),
                "duration": time.monotonic() - started,
            }
        )


class Session:
    """Supervises the worker process holding the interpreter state."""

    def __init__(self) -> None:
        self._conn = None
        self._process = None

    def _ensure_worker(self) -> None:
        if self._process is not None and self._process.is_alive():
            return
        ctx = multiprocessing.get_context("fork")
        parent_conn, child_conn = ctx.Pipe()
        self._process = ctx.Process(
            target=_worker_loop, args=(child_conn,), daemon=True
        )
        self._process.start()
        child_conn.close()
        self._conn = parent_conn

    def _kill_worker(self) -> None:
        if self._process is not None and self._process.is_alive():
            self._process.terminate()
            self._process.join(timeout=2.0)
            if self._process.is_alive():
                self._process.kill()
                self._process.join(timeout=2.0)
        if self._conn is not None:
            self._conn.close()
        self._process = None
        self._conn = None

    def exec_fragment(self, code: str, timeout: float) -> dict:
        self._ensure_worker()
        started = time.monotonic()
        try:
            self._conn.send(code)
            if self._conn.poll(timeout):
                result = self._conn.recv()
                return {
                    "ok": bool(result["ok"]),
                    "output": result["output"],
                    "timed_out": False,
                    "duration": float(result["duration"]),
                }
        except (BrokenPipeError, EOFError, OSError):
            self._kill_worker()
            return {
                "ok": False,
                "output": "execution worker died unexpectedly",
                "timed_out": False,
                "duration": time.monotonic() - started,
            }
        # watchdog: the fragment is still running past its budget
        self._kill_worker()
        return {
            "ok": False,
            "output": "",
            "timed_out": True,
            "duration": time.monotonic() - started,
        }

    def reset(self) -> None:
        self._kill_worker()

    def close(self) -> None:
        if self._conn is not None:
            try:
                self._conn.send(None)
            except (BrokenPipeError, OSError):
                pass
        self._kill_worker()


def check_syntax(code: str) -> str | None:
    try:
        compile(code, "<fragment>", "exec")
        return None
    except SyntaxError as exc:
        return f"SyntaxError: {exc.msg} (line {exc.lineno})"


def run_script(code: str, timeout: float) -> dict:
    """Execute code as a standalone script in the current directory."""
    started = time.monotonic()
    with tempfile.NamedTemporaryFile(
        "w", suffix=".py", delete=False, encoding="utf-8"
    ) as handle:
        handle.write(code)
        script_path = handle.name
    try:
        completed = subprocess.run(
            [sys.executable, script_path],
            cwd=os.getcwd(),
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            timeout=timeout,
        )
        return {
            "ok": completed.returncode == 0,
            "output": completed.stdout or "",
            "timed_out": False,
            "duration": time.monotonic() - started,
        }
    except subprocess.TimeoutExpired as exc:
        output = exc.stdout
        if isinstance(output, bytes):
            output = output.decode("utf-8", errors="replace")
        return {
            "ok": False,
            "output": output or "",
            "timed_out": True,
            "duration": time.monotonic() - started,
        }
    finally:
        with contextlib.suppress(OSError):
            os.unlink(script_path)


def _error(request_id: int, message: str) -> dict:
    return {
        "request_id": request_id,
        "ok": False,
        "output": message,
        "timed_out": False,
        "syntax_error": None,
    }


def handle_line(line: str, session: Session) -> tuple[dict, bool]:
    """Build the response for one request line; the flag asks to exit."""
    try:
        request = json.loads(line)
        if not isinstance(request, dict):
            raise ValueError("request is not an object")
    except (json.JSONDecodeError, ValueError) as exc:
        match = _REQUEST_ID_RE.search(line)
        request_id = int(match.group(1)) if match else 0
        return _error(request_id, f"malformed request: {exc}"), False

    raw_id = request.get("request_id")
    request_id = raw_id if isinstance(raw_id, int) and not isinstance(raw_id, bool) else 0
    cmd = request.get("cmd")
    code = request.get("code")
    timeout = request.get("timeout")

    if cmd == "close":
        return {
            "request_id": request_id,
            "ok": True,
            "output": "",
            "timed_out": False,
            "syntax_error": None,
        }, True
    if cmd == "reset":
        session.reset()
        return {
            "request_id": request_id,
            "ok": True,
            "output": "",
            "timed_out": False,
            "syntax_error": None,
        }, False
    if cmd == "check":
        if not isinstance(code, str):
            return _error(request_id, "check requires a code string"), False
        error = check_syntax(code)
        return {
            "request_id": request_id,
            "ok": error is None,
            "output": "",
            "timed_out": False,
            "syntax_error": error,
        }, False
    if cmd in ("exec", "run"):
        if not isinstance(code, str):
            return _error(request_id, f"{cmd} requires a code string"), False
        if not isinstance(timeout, (int, float)) or isinstance(timeout, bool) or timeout <= 0:
            return _error(request_id, f"{cmd} requires a positive timeout"), False
        if cmd == "exec":
            result = session.exec_fragment(code, float(timeout))
        else:
            result = run_script(code, float(timeout))
        return {
            "request_id": request_id,
            "ok": result["ok"],
            "output": result["output"],
            "timed_out": result["timed_out"],
            "syntax_error": None,
            "duration": result["duration"],
        }, False
    return _error(request_id, f"unknown cmd: {cmd!r}"), False


def serve(stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    session = Session()
    try:
        for line in stdin:
            if not line.strip():
                continue
            response, should_exit = handle_line(line, session)
            stdout.write(json.dumps(response, ensure_ascii=True) + "\n")
            stdout.flush()
            if should_exit:
                break
    finally:
        session.close()
    return 0


def main() -> int:
    return serve()


if __name__ == "__main__":
    sys.exit(main())
