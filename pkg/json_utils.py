"""Robust JSON extraction for external backend output.

OCR engines wrapped as commands often print progress lines or banners around
the JSON document on stdout; these helpers find the document anyway.
"""
import re
import json
from typing import Any, Dict, List, Optional


def extract_json_from_output(content: Any) -> Optional[Dict[str, Any]]:
    """
    Extract a JSON object from command output with fallback strategies.

    Accepts plain JSON, a JSON object embedded between log lines, or
    bytes (decoded as UTF-8). The first object that parses wins.

    Args:
        content: stdout of a backend command (str or bytes)

    Returns:
        Parsed JSON object if found, None if unable to extract
    """
    if isinstance(content, bytes):
        content = content.decode('utf-8', errors='replace')

    if not isinstance(content, str):
        return None

    content = content.strip()
    if not content:
        return None

    try:
        parsed = json.loads(content)
        return parsed if isinstance(parsed, dict) else None
    except json.JSONDecodeError:
        pass

    # Scan for a balanced {...} that parses, starting at each '{'
    decoder = json.JSONDecoder()
    for match in re.finditer(r'\{', content):
        try:
            parsed, _ = decoder.raw_decode(content, match.start())
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, dict):
            return parsed

    return None


def validate_json_structure(data: Any, required_keys: Optional[List[str]] = None) -> bool:
    """
    Validate JSON structure has required keys.

    Args:
        data: The parsed document
        required_keys: List of required top-level keys

    Returns:
        True if valid, False otherwise
    """
    if not isinstance(data, dict):
        return False

    if required_keys:
        return all(key in data for key in required_keys)

    return True


def last_nonempty_line(content: str) -> Optional[str]:
    """Return the final non-blank line of command output, stripped."""
    for line in reversed(content.splitlines()):
        if line.strip():
            return line.strip()
    return None
