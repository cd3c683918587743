"""Protocol-level tests against the live shim process."""

from __future__ import annotations

import json
import os
import random
import string
import subprocess
import sys
import time
from pathlib import Path

import pytest

SRC = Path(__file__).resolve().parent.parent / "src"


class ShimProcess:
    def __init__(self, cwd: Path) -> None:
        env = dict(os.environ)
        env["PYTHONPATH"] = str(SRC) + os.pathsep + env.get("PYTHONPATH", "")
        self.process = subprocess.Popen(
            [sys.executable, "-m", "automind_runner"],
            cwd=str(cwd),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            encoding="utf-8",
            env=env,
        )
        self._next_id = 1

    def send_line(self, line: str) -> dict:
        self.process.stdin.write(line + "\n")
        self.process.stdin.flush()
        raw = self.process.stdout.readline()
        assert raw, "shim closed its output stream"
        return json.loads(raw)

    def request(self, cmd: str, **fields) -> dict:
        payload = {"cmd": cmd, "request_id": self._next_id, **fields}
        self._next_id += 1
        response = self.send_line(json.dumps(payload))
        assert response["request_id"] == payload["request_id"]
        return response

    def alive(self) -> bool:
        return self.process.poll() is None

    def close(self) -> None:
        if self.alive():
            try:
                self.request("close")
            except AssertionError:
                pass
        try:
            self.process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.process.kill()


@pytest.fixture
def shim(tmp_path):
    process = ShimProcess(tmp_path)
    yield process
    process.close()


def test_check_reports_syntax_error(shim):
    response = shim.request("check", code="x = (")
    assert not response["ok"]
    assert response["syntax_error"]
    assert not response["timed_out"]


def test_check_valid_code(shim):
    response = shim.request("check", code="x = 1")
    assert response["ok"]
    assert response["syntax_error"] is None


def test_check_does_not_mutate_state(shim):
    assert shim.request("exec", code="a = 2", timeout=30)["ok"]
    assert not shim.request("check", code="x = (")["ok"]
    response = shim.request("exec", code="print(a + 1)", timeout=30)
    assert response["ok"]
    assert "3" in response["output"]


def test_state_retained_across_exec(shim):
    shim.request("exec", code="a = 2", timeout=30)
    response = shim.request("exec", code="print(a + 1)", timeout=30)
    assert "3" in response["output"]


def test_exec_captures_stderr_interleaved(shim):
    code = "import sys\nprint('out')\nsys.stderr.write('err\\n')"
    response = shim.request("exec", code=code, timeout=30)
    assert response["ok"]
    assert "out" in response["output"]
    assert "err" in response["output"]


def test_exec_error_reports_traceback(shim):
    response = shim.request("exec", code="raise ValueError('nope')", timeout=30)
    assert not response["ok"]
    assert "ValueError: nope" in response["output"]
    # session survives the exception
    assert shim.request("exec", code="b = 5", timeout=30)["ok"]


def test_busy_loop_times_out_within_grace(shim):
    started = time.monotonic()
    response = shim.request("exec", code="while True:\n    pass", timeout=1)
    elapsed = time.monotonic() - started
    assert response["timed_out"]
    assert not response["ok"]
    assert elapsed < 11.0
    # the restarted session works, with fresh state
    follow_up = shim.request("exec", code="print('alive')", timeout=30)
    assert follow_up["ok"]
    assert "alive" in follow_up["output"]


def test_reset_clears_state(shim):
    shim.request("exec", code="a = 2", timeout=30)
    assert shim.request("reset")["ok"]
    response = shim.request("exec", code="print(a)", timeout=30)
    assert not response["ok"]
    assert "NameError" in response["output"]


def test_run_is_isolated_from_session(shim):
    shim.request("exec", code="a = 2", timeout=30)
    response = shim.request("run", code="print(a)", timeout=30)
    assert not response["ok"]
    assert "NameError" in response["output"]


def test_run_captures_output_and_writes_files(shim, tmp_path):
    code = (
        "import pathlib\n"
        "pathlib.Path('submission').mkdir(exist_ok=True)\n"
        "pathlib.Path('submission/submission.csv').write_text('id,y\\n')\n"
        "print('Validation metric: 0.87')\n"
    )
    response = shim.request("run", code=code, timeout=30)
    assert response["ok"]
    assert "Validation metric: 0.87" in response["output"]
    assert (tmp_path / "submission" / "submission.csv").is_file()


def test_run_times_out(shim):
    response = shim.request("run", code="while True:\n    pass", timeout=1)
    assert response["timed_out"]
    assert not response["ok"]


def test_malformed_requests_get_error_responses(shim):
    cases = [
        '{"cmd": "exec", "request_id": 11}',  # missing code and timeout
        '{"cmd": "exec", "code": "x = 1", "request_id": 12}',  # missing timeout
        '{"cmd": "nonsense", "request_id": 13}',
        '{"cmd": "exec", "code": 5, "timeout": 1, "request_id": 14}',
        'this is not json but has "request_id": 15 in it',
    ]
    for expected_id, line in zip((11, 12, 13, 14, 15), cases):
        response = shim.send_line(line)
        assert response["request_id"] == expected_id
        assert not response["ok"]
    assert shim.alive()
    # still serving normal traffic afterwards
    assert shim.request("exec", code="print('ok')", timeout=30)["ok"]


def test_close_exits_cleanly(tmp_path):
    shim = ShimProcess(tmp_path)
    response = shim.request("close")
    assert response["ok"]
    assert shim.process.wait(timeout=5) == 0


def _fuzz_line(rng: random.Random, request_id: int) -> str:
    kind = rng.randrange(6)
    if kind == 0:  # valid check
        return json.dumps(
            {"cmd": "check", "code": rng.choice(["x = 1", "x = (", "def f(:"]), "request_id": request_id}
        )
    if kind == 1:  # valid small exec
        return json.dumps(
            {"cmd": "exec", "code": f"v{request_id} = {request_id}", "timeout": 5, "request_id": request_id}
        )
    if kind == 2:  # unknown cmd
        return json.dumps({"cmd": rng.choice(["", "evaluate", "EXEC"]), "request_id": request_id})
    if kind == 3:  # wrong types
        return json.dumps(
            {"cmd": "exec", "code": rng.choice([None, 5, ["x"]]), "timeout": rng.choice([None, "soon", -1, True]), "request_id": request_id}
        )
    if kind == 4:  # trailing garbage, id recoverable by regex
        noise = "".join(rng.choices(string.ascii_letters, k=8))
        return f'{{"cmd": "exec", "request_id": {request_id}, garbage {noise}'
    return json.dumps({"cmd": "reset", "request_id": request_id})


def test_protocol_totality_under_fuzzing(tmp_path):
    shim = ShimProcess(tmp_path)
    rng = random.Random(1234)
    try:
        for request_id in range(1, 1001):
            response = shim.send_line(_fuzz_line(rng, request_id))
            assert response["request_id"] == request_id, response
            assert isinstance(response["ok"], bool)
        assert shim.alive()
    finally:
        shim.close()
