import json

import pytest

from modules.system import verify
from modules.system.sysmon import RunMonitor
from modules.system.telemetry import ReportLogger
from modules.system.verify import SuiteContext, run_suites


class TestRunSuites:
    """Suite orchestration, failure capture and telemetry."""

    def test_raising_suite_becomes_failed_entry(self, monkeypatch, tmp_path):
        def _boom(ctx):
            raise RuntimeError("broken suite")

        monkeypatch.setitem(verify.SUITES, "hr_reversal", _boom)
        telemetry = ReportLogger(str(tmp_path))
        try:
            report = run_suites(["hr_reversal", "maxlinear_oracle"], SuiteContext(), telemetry)
        finally:
            telemetry.close()
        assert not report["pass"]
        failed = report["suites"]["hr_reversal"]
        assert not failed["pass"]
        assert failed["entries"][0]["value"] == "RuntimeError: broken suite"
        assert report["suites"]["maxlinear_oracle"]["pass"]
        errors = [e for e in report["events"] if e["level"] == "ERROR"]
        assert errors[0]["source"] == "hr_reversal"
        assert errors[0]["message"].startswith("raised RuntimeError")

    def test_passing_run_lists_no_events(self, tmp_path):
        telemetry = ReportLogger(str(tmp_path))
        try:
            report = run_suites(["maxlinear_oracle"], SuiteContext(), telemetry)
        finally:
            telemetry.close()
        assert report["pass"]
        assert report["events"] == []
        assert telemetry.get_recent_events()[-1]["level"] == "INFO"

    def test_failed_checks_become_warnings(self, monkeypatch, tmp_path):
        monkeypatch.setitem(verify.SUITES, "dag_dp",
                            lambda ctx: [verify.report_entry("gap", 1.0, 0.0, False)])
        telemetry = ReportLogger(str(tmp_path))
        try:
            report = run_suites(["dag_dp"], SuiteContext(), telemetry)
        finally:
            telemetry.close()
        assert report["events"] == [{"level": "WARN", "source": "dag_dp",
                                     "message": "failed checks: gap"}]

    def test_report_has_no_timings(self):
        report = run_suites(["maxlinear_oracle"], SuiteContext())
        text = json.dumps(report)
        assert "wall_sec" not in text and "cpu_sec" not in text

    def test_suite_records_go_to_log(self, tmp_path):
        telemetry = ReportLogger(str(tmp_path))
        try:
            run_suites(["dag_dp"], SuiteContext(seed=3), telemetry)
        finally:
            telemetry.close()
        lines = [json.loads(x) for x in open(telemetry.path).read().splitlines()]
        record = lines[-1]["suite_record"]
        assert record["suite"] == "dag_dp"
        assert record["checks"] == record["passed"] == 1
        assert "wall_sec" in record["resources"]

    def test_determinism_without_runner(self):
        entries = verify.suite_determinism(SuiteContext())
        assert entries[0]["pass"] is False

    def test_model_suite_without_model(self):
        assert verify.suite_model(SuiteContext()) == []

    def test_moment_suite_small(self):
        entries = verify.suite_hr_moment(SuiteContext(seed=0), n=200_000)
        assert entries[0]["pass"]
        assert entries[1]["metric"] == "hr_moment_mc"

    @pytest.mark.slow
    def test_consistency_suite(self):
        entries = verify.suite_consistency(SuiteContext(seed=0), n=200_000)
        assert all(e["pass"] for e in entries[:2])


class TestTelemetry:

    def test_events(self, tmp_path):
        telemetry = ReportLogger(str(tmp_path))
        telemetry.log_event("warn", "Measure", "zero mass")
        events = telemetry.get_recent_events()
        telemetry.close()
        assert events[-1]["level"] == "WARN"
        assert events[-1]["source"] == "Measure"
        assert telemetry.path.startswith(str(tmp_path))


class TestRunMonitor:

    def test_status(self):
        with RunMonitor("unit") as mon:
            sum(range(10_000))
        status = mon.get_status()
        assert status["label"] == "unit"
        assert status["wall_sec"] >= 0.0
        assert status["peak_rss_mb"] > 0.0
        assert status["cpu_count"] >= 1
