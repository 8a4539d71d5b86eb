"""``key = value`` text files used for experiment, dataset and topology configs."""
from __future__ import annotations


def parse_key_values(text: str, allowed=None) -> dict[str, str]:
    """Parse one ``key = value`` (or ``key: value``) pair per line; ``#`` starts a comment.

    Unknown keys (when ``allowed`` is given) and duplicates raise ``ValueError``.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, value = (t.strip() for t in line.split(sep, 1))
                break
        else:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if allowed is not None and key not in allowed:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_key_values(values: dict) -> str:
    return "".join(f"{k} = {'' if v is None else v}\n" for k, v in values.items())
