"""Tests for CSV/JSON report writing."""

import hashlib
import json
import tempfile
from pathlib import Path

import numpy as np
import pytest

from bd_cutoff.exporter import ReportExporter, config_hash, format_float
from bd_cutoff.exporter.report_exporter import canonical_json, table_to_csv
from bd_cutoff.models import ExperimentReport, Table


def create_test_report() -> ExperimentReport:
    """Helper to create a report with two tables."""
    report = ExperimentReport(command="evolve")
    report.summary = {"z": np.float64(0.5), "N": np.int64(64), "bad": float("nan")}
    report.flag("mass_conserved", True)
    report.tables = [
        Table(name="evolve", columns=["t", "mass"], rows=[[0.0, 1.0], [0.5, 1.0]]),
        Table(name="snapshot", columns=["i", "v"], rows=[[1.0, 0.1]]),
    ]
    return report


class TestFormatting:
    """Tests for number and table formatting."""

    def test_format_float(self):
        """Test 17 significant digits and non-finite spellings."""
        assert format_float(0.1) == "0.10000000000000001"
        assert format_float(2.0) == "2"
        assert format_float(float("nan")) == "nan"
        assert format_float(float("inf")) == "inf"
        assert format_float(float("-inf")) == "-inf"

    def test_table_to_csv(self):
        """Test header plus one line per row."""
        table = Table(name="x", columns=["a", "b"], rows=[[1.0, 0.25], [2.0, float("nan")]])

        assert table_to_csv(table) == "a,b\n1,0.25\n2,nan\n"

    def test_canonical_json(self):
        """Test sorted keys, compact separators and null for non-finite values."""
        assert canonical_json({"b": 1, "a": float("inf")}) == '{"a":null,"b":1}'


class TestConfigHash:
    """Tests for the config hash."""

    def test_git_blob_hash(self):
        """Test the blob header convention."""
        data = b'{"a":1}'
        expected = hashlib.sha1(b"blob 7\0" + data).hexdigest()

        assert config_hash({"a": 1}) == expected

    def test_key_order_independent(self):
        """Test that key order does not change the hash."""
        assert config_hash({"a": 1, "b": {"c": 2, "d": 3}}) == config_hash(
            {"b": {"d": 3, "c": 2}, "a": 1}
        )
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestReportExporter:
    """Tests for ReportExporter."""

    def test_export_writes_tables_and_report(self):
        """Test one CSV per table plus report.json."""
        with tempfile.TemporaryDirectory() as tmpdir:
            report = create_test_report()
            paths = ReportExporter(tmpdir).export(report)

            assert set(paths) == {"evolve", "snapshot", "report"}
            assert (Path(tmpdir) / "evolve.csv").read_text() == "t,mass\n0,1\n0.5,1\n"
            data = json.loads((Path(tmpdir) / "report.json").read_text())
            assert data["passed"] is True
            assert data["summary"] == {"z": 0.5, "N": 64, "bad": None}
            assert "tables" not in data
            assert data["table_paths"]["evolve"].endswith("evolve.csv")
            assert not list(Path(tmpdir).glob("*.tmp"))

    def test_export_without_csv(self):
        """Test that only the summary is written when CSV output is off."""
        with tempfile.TemporaryDirectory() as tmpdir:
            paths = ReportExporter(tmpdir).export(create_test_report(), write_csv=False)

            assert list(paths) == ["report"]
            assert sorted(p.name for p in Path(tmpdir).iterdir()) == ["report.json"]

    def test_creates_output_directory(self):
        """Test that nested output directories are created."""
        with tempfile.TemporaryDirectory() as tmpdir:
            out = Path(tmpdir) / "a" / "b"
            ReportExporter(out).export(create_test_report())

            assert (out / "report.json").exists()

    def test_failure_removes_written_files(self, monkeypatch):
        """Test that a failed export leaves nothing behind."""
        with tempfile.TemporaryDirectory() as tmpdir:
            exporter = ReportExporter(tmpdir)

            def fail(report):
                raise OSError("disk full")

            monkeypatch.setattr(exporter, "write_report", fail)
            with pytest.raises(OSError):
                exporter.export(create_test_report())

            assert list(Path(tmpdir).iterdir()) == []
            assert exporter.created == []

    def test_cleanup_count(self):
        """Test that cleanup reports the number of files removed."""
        with tempfile.TemporaryDirectory() as tmpdir:
            exporter = ReportExporter(tmpdir)
            exporter.export(create_test_report())

            assert exporter.cleanup() == 3
            assert exporter.cleanup() == 0
