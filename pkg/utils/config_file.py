"""
Reader for flat `key = value` problem files and recorded run.json files.

    # comment
    f = "tanh(s) - 0.3"
    k = 0
    tol = 1e-10
    override_solvability = false
    x0 = [0.1, 0.0, 0.2]
"""
import json
import re
from pathlib import Path

from services.errors import ConfigError

_KEY = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*$')
_INT = re.compile(r'^[+-]?\d+$')


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if quote:
            if ch == quote:
                quote = None
        elif ch in ('"', "'"):
            quote = ch
        elif ch == '#':
            return line[:i]
    return line


def _scalar(text: str, key: str):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ('"', "'"):
        return text[1:-1]
    if text in ('true', 'false'):
        return text == 'true'
    if _INT.match(text):
        return int(text)
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"key '{key}': cannot parse value {text!r} (strings must be quoted)", key)
    if value != value or value in (float('inf'), float('-inf')):
        raise ConfigError(f"key '{key}': value must be finite", key)
    return value


def parse_value(text: str, key: str):
    """Quoted string, true/false, integer, real or a bracketed list of those."""
    text = text.strip()
    if not text:
        raise ConfigError(f"key '{key}' has no value", key)
    if text.startswith('['):
        if not text.endswith(']'):
            raise ConfigError(f"key '{key}': unterminated list", key)
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_scalar(item, key) for item in inner.split(',')]
    return _scalar(text, key)


def parse_config_text(text: str) -> dict:
    """
    Parse key = value lines.

    Raises:
        ConfigError: Malformed line, bad key or duplicate key
    """
    data = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"line {number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split('=', 1))
        if not _KEY.match(key):
            raise ConfigError(f"line {number}: invalid key '{key}'", key)
        if key in data:
            raise ConfigError(f"duplicate key '{key}'", key)
        data[key] = parse_value(value, key)
    return data


def load_run_record(path) -> tuple[str, dict, dict]:
    """(subcommand, configuration, full record) from a run.json written by an earlier run."""
    try:
        record = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read run record {path}: {e}")
    if not isinstance(record, dict) or 'subcommand' not in record or 'config' not in record:
        raise ConfigError(f"{path} is not a run record")
    config = {key: value for key, value in record['config'].items() if value is not None}
    return record['subcommand'], config, record


def load_config(path) -> dict:
    """Configuration from a key = value file, or from run.json when given one."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    if path.suffix == '.json' or text.lstrip().startswith('{'):
        return load_run_record(path)[1]
    return parse_config_text(text)
