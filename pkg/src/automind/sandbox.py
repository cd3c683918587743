"""Workspace layout and script execution.

Generated solution code depends on a fixed directory contract: task data is
read from ``./input``, predictions go to ``./submission/submission.csv``, and
the validation score to ``./submission/eval_metric.txt``. Execution is
delegated to a pluggable executor; tests script an in-process fake, real runs
launch the external runner process and speak its line protocol.
"""

from __future__ import annotations

import json
import logging
import shutil
import stat
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .errors import ExecutorUnavailable, IoFailure, SessionLost
from .tree import truncate_output

log = logging.getLogger(__name__)

TIMEOUT_GRACE_SECONDS = 10.0
SUBMISSION_FILE = "submission.csv"
EVAL_METRIC_FILE = "eval_metric.txt"


@dataclass(frozen=True)
class Workspace:
    root: Path

    @property
    def input_dir(self) -> Path:
        return self.root / "input"

    @property
    def submission_dir(self) -> Path:
        return self.root / "submission"

    @property
    def working_dir(self) -> Path:
        return self.root / "working"


@dataclass(frozen=True)
class ExecResult:
    exit_ok: bool
    output: str
    duration: float
    timed_out: bool = False

    def __post_init__(self) -> None:
        if self.timed_out and self.exit_ok:
            raise ValueError("a timed-out execution cannot be exit_ok")


@dataclass
class ArtifactReport:
    has_submission: bool
    eval_metric_text: str | None = None


def prepare_workspace(
    task_data: str | Path,
    run_root: str | Path,
    exclude: tuple[str, ...] = (),
) -> Workspace:
    """Populate the workspace layout under *run_root* from *task_data*.

    Input files are copied once and made read-only so solution scripts cannot
    corrupt the source data; the submission directory is re-emptied on every
    call so each action starts clean. *exclude* names are skipped when
    copying (task metadata files that are not data).
    """
    task_data = Path(task_data)
    if not task_data.is_dir():
        raise IoFailure(f"task data directory not found: {task_data}")
    ws = Workspace(root=Path(run_root))
    try:
        ws.root.mkdir(parents=True, exist_ok=True)
        if not ws.input_dir.exists():
            ignore = shutil.ignore_patterns(*exclude) if exclude else None
            shutil.copytree(task_data, ws.input_dir, ignore=ignore)
            for path in ws.input_dir.rglob("*"):
                if path.is_file():
                    path.chmod(stat.S_IRUSR | stat.S_IRGRP | stat.S_IROTH)
        if ws.submission_dir.exists():
            shutil.rmtree(ws.submission_dir)
        ws.submission_dir.mkdir()
        ws.working_dir.mkdir(exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"failed to prepare workspace at {ws.root}: {exc}") from exc
    return ws


def collect_artifacts(workspace: Workspace) -> ArtifactReport:
    """Report whether a submission exists and the recorded metric text."""
    submission = workspace.submission_dir / SUBMISSION_FILE
    metric_file = workspace.submission_dir / EVAL_METRIC_FILE
    text: str | None = None
    if metric_file.is_file():
        text = metric_file.read_text(encoding="utf-8", errors="replace").strip()
    return ArtifactReport(
        has_submission=submission.is_file(), eval_metric_text=text
    )


class Executor(Protocol):
    """Contract every executor satisfies.

    Sessions retain interpreter state across ``exec_fragment`` calls until
    closed; ``run_script`` is stateless.
    """

    def open_session(self, workspace: Workspace) -> object: ...

    def check_syntax(self, session: object, code: str) -> str | None:
        """Return None when the code parses, else the syntax error text."""
        ...

    def exec_fragment(self, session: object, code: str, timeout: float) -> ExecResult: ...

    def run_script(self, workspace: Workspace, code: str, timeout: float) -> ExecResult: ...

    def close(self, session: object) -> None: ...


# ---------------------------------------------------------------------------
# Scripted in-process executor for hermetic tests
# ---------------------------------------------------------------------------


@dataclass
class FakeOutcome:
    """Scripted result for one exact code string.

    ``files`` are written into the workspace (relative paths) when the code
    "runs", which is how scripted solutions produce submission artifacts.
    """

    result: ExecResult
    files: dict[str, str] = field(default_factory=dict)
    syntax_error: str | None = None


@dataclass
class _FakeSession:
    workspace: Workspace
    executed: list[str] = field(default_factory=list)
    closed: bool = False


class FakeExecutor:
    """Table-driven executor: maps exact code strings to scripted outcomes.

    Unknown code raises, which catches fixture drift early. Syntax checks
    consult the scripted outcome first and fall back to a real parse.
    """

    def __init__(self, outcomes: dict[str, FakeOutcome] | None = None) -> None:
        self.outcomes = dict(outcomes or {})
        self.run_calls: list[str] = []
        self.fragment_calls: list[str] = []

    def script(self, code: str, outcome: FakeOutcome) -> None:
        self.outcomes[code] = outcome

    def _lookup(self, code: str) -> FakeOutcome:
        try:
            return self.outcomes[code]
        except KeyError:
            raise ExecutorUnavailable(
                f"no scripted outcome for code starting {code[:60]!r}"
            ) from None

    def _materialize(self, workspace: Workspace, outcome: FakeOutcome) -> None:
        for rel_path, content in outcome.files.items():
            target = workspace.root / rel_path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content, encoding="utf-8")

    def open_session(self, workspace: Workspace) -> _FakeSession:
        return _FakeSession(workspace=workspace)

    def check_syntax(self, session: _FakeSession, code: str) -> str | None:
        outcome = self.outcomes.get(code)
        if outcome is not None and outcome.syntax_error is not None:
            return outcome.syntax_error
        if outcome is not None:
            return None
        try:
            compile(code, "<fragment>", "exec")
            return None
        except SyntaxError as exc:
            return f"SyntaxError: {exc.msg} (line {exc.lineno})"

    def exec_fragment(
        self, session: _FakeSession, code: str, timeout: float
    ) -> ExecResult:
        if session.closed:
            raise SessionLost("fake session already closed")
        self.fragment_calls.append(code)
        outcome = self._lookup(code)
        self._materialize(session.workspace, outcome)
        session.executed.append(code)
        return outcome.result

    def run_script(
        self, workspace: Workspace, code: str, timeout: float
    ) -> ExecResult:
        self.run_calls.append(code)
        outcome = self._lookup(code)
        self._materialize(workspace, outcome)
        return outcome.result

    def close(self, session: _FakeSession) -> None:
        session.closed = True


# ---------------------------------------------------------------------------
# Client for the external runner process (line-delimited JSON over stdio)
# ---------------------------------------------------------------------------


@dataclass
class _ShimSession:
    process: subprocess.Popen
    workspace: Workspace
    lock: threading.Lock = field(default_factory=threading.Lock)
    next_id: int = 1
    closed: bool = False


class ShimExecutor:
    """Executor backed by one runner process per session.

    The runner is launched with the workspace root as its working directory
    and driven over stdin/stdout with one JSON object per line. The runner
    enforces fragment timeouts itself; this client only applies a grace
    period on top before declaring the session lost.
    """

    def __init__(self, runner_cmd: list[str]) -> None:
        if not runner_cmd:
            raise ExecutorUnavailable("runner command is empty")
        self.runner_cmd = list(runner_cmd)

    def _spawn(self, workspace: Workspace) -> subprocess.Popen:
        try:
            return subprocess.Popen(
                self.runner_cmd,
                cwd=str(workspace.root),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise ExecutorUnavailable(
                f"cannot launch runner {self.runner_cmd!r}: {exc}"
            ) from exc

    def open_session(self, workspace: Workspace) -> _ShimSession:
        return _ShimSession(process=self._spawn(workspace), workspace=workspace)

    def _roundtrip(
        self, session: _ShimSession, payload: dict, wait_seconds: float | None
    ) -> dict:
        if session.closed or session.process.poll() is not None:
            raise SessionLost("runner process is not running")
        with session.lock:
            payload = dict(payload, request_id=session.next_id)
            session.next_id += 1
            line = json.dumps(payload, ensure_ascii=True)
            timer: threading.Timer | None = None
            if wait_seconds is not None:
                timer = threading.Timer(wait_seconds, session.process.kill)
                timer.start()
            try:
                session.process.stdin.write(line + "\n")
                session.process.stdin.flush()
                raw = session.process.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise SessionLost(f"runner pipe failed: {exc}") from exc
            finally:
                if timer is not None:
                    timer.cancel()
            if not raw:
                raise SessionLost("runner closed its output stream")
            try:
                response = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SessionLost(f"unparseable runner response: {raw!r}") from exc
            if response.get("request_id") != payload["request_id"]:
                raise SessionLost(
                    f"runner response id {response.get('request_id')!r} does not "
                    f"match request id {payload['request_id']}"
                )
            return response

    def check_syntax(self, session: _ShimSession, code: str) -> str | None:
        response = self._roundtrip(session, {"cmd": "check", "code": code}, None)
        if response.get("ok"):
            return None
        return response.get("syntax_error") or response.get("output") or "syntax error"

    def exec_fragment(
        self, session: _ShimSession, code: str, timeout: float
    ) -> ExecResult:
        response = self._roundtrip(
            session,
            {"cmd": "exec", "code": code, "timeout": timeout},
            timeout + TIMEOUT_GRACE_SECONDS,
        )
        return ExecResult(
            exit_ok=bool(response.get("ok")),
            output=truncate_output(response.get("output", "")),
            duration=float(response.get("duration", 0.0)),
            timed_out=bool(response.get("timed_out")),
        )

    def run_script(
        self, workspace: Workspace, code: str, timeout: float
    ) -> ExecResult:
        session = self.open_session(workspace)
        try:
            response = self._roundtrip(
                session,
                {"cmd": "run", "code": code, "timeout": timeout},
                timeout + TIMEOUT_GRACE_SECONDS,
            )
            return ExecResult(
                exit_ok=bool(response.get("ok")),
                output=truncate_output(response.get("output", "")),
                duration=float(response.get("duration", 0.0)),
                timed_out=bool(response.get("timed_out")),
            )
        finally:
            self.close(session)

    def close(self, session: _ShimSession) -> None:
        if session.closed:
            return
        session.closed = True
        process = session.process
        try:
            if process.poll() is None:
                try:
                    process.stdin.write(json.dumps({"cmd": "close", "request_id": 0}) + "\n")
                    process.stdin.flush()
                except (BrokenPipeError, OSError):
                    pass
                try:
                    process.wait(timeout=5.0)
                except subprocess.TimeoutExpired:
                    process.kill()
                    process.wait(timeout=5.0)
        finally:
            for stream in (process.stdin, process.stdout):
                if stream is not None:
                    try:
                        stream.close()
                    except OSError:
                        pass
