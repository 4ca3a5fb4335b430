import numpy as np
import pytest

from dreamrace.autodiff import tensor as T
from dreamrace.errors import ConfigurationError
from dreamrace.gradsuite import CHECKS, TOLERANCE, format_report, run_suite


def test_fresh_build_passes_every_check():
    report = run_suite()
    bad = [r for r in report["results"] if not r["passed"]]
    assert report["passed"], bad
    assert max(r["max_rel_error"] for r in report["results"]) < TOLERANCE


def test_composite_losses_and_networks_registered():
    for name in ("loss:world_model_total", "loss:actor", "loss:critic", "loss:ppo", "network:mlp", "network:gru"):
        assert name in CHECKS


def test_report_lists_per_op_error():
    report = run_suite(["tanh", "matmul"])
    text = format_report(report)
    lines = text.splitlines()
    assert lines[1].split()[0] == "tanh" and "e-" in lines[1]
    assert lines[2].split()[0] == "matmul"
    assert "2 checks, 0 failed" in lines[-1]


def _flipped_tanh(a):
    out = np.tanh(a.data)
    return T._node(out, (a,), lambda g: (-g * (1.0 - out * out),), "tanh")


def test_injected_sign_error_fails(monkeypatch):
    monkeypatch.setattr(T, "tanh", _flipped_tanh)
    report = run_suite(["tanh", "sigmoid"])
    by_name = {r["name"]: r for r in report["results"]}
    assert not report["passed"]
    assert not by_name["tanh"]["passed"] and by_name["sigmoid"]["passed"]
    assert "FAIL" in format_report(report)


def test_crashing_check_counts_as_failure(monkeypatch):
    def boom():
        raise RuntimeError("kaput")

    monkeypatch.setitem(CHECKS, "boom", boom)
    report = run_suite(["boom"])
    assert not report["passed"] and "kaput" in report["results"][0]["error"]


def test_unknown_check_name():
    with pytest.raises(ConfigurationError):
        run_suite(["nope"])
