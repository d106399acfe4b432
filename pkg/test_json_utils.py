"""Tests for json_utils.py."""

from json_utils import extract_json_from_output, last_nonempty_line, validate_json_structure


class TestExtractJson:
    """Test suite for JSON extraction from command output."""

    def test_plain_document(self):
        """Test a bare JSON object."""
        assert extract_json_from_output('{"regions": []}') == {"regions": []}

    def test_between_log_lines(self):
        """Test a document surrounded by progress output."""
        out = 'loading model {v2}\n{"regions": [{"id": "a"}]}\ndone in 0.3s\n'
        assert extract_json_from_output(out) == {"regions": [{"id": "a"}]}

    def test_bytes_input(self):
        """Test that bytes are decoded."""
        assert extract_json_from_output(b'{"ok": 1}') == {"ok": 1}

    def test_no_document(self):
        """Test outputs without an object."""
        assert extract_json_from_output('') is None
        assert extract_json_from_output('[1, 2, 3]') is None
        assert extract_json_from_output(None) is None


class TestHelpers:
    """Test suite for the small output helpers."""

    def test_required_keys(self):
        """Test key validation."""
        assert validate_json_structure({"regions": []}, ['regions'])
        assert not validate_json_structure({"other": 1}, ['regions'])
        assert not validate_json_structure([], ['regions'])

    def test_last_line(self):
        """Test the last non-blank line is returned stripped."""
        assert last_nonempty_line("working\n  out.png  \n\n") == "out.png"
        assert last_nonempty_line("\n \n") is None
