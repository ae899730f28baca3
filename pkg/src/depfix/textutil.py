"""Small text helpers for one-line code snippets."""

from __future__ import annotations

_OPENERS = {"(": ")", "[": "]", "{": "}"}


def close_brackets(text: str) -> str | None:
    """Append closers for brackets left open by a truncated line (strings are skipped)."""
    stack = []
    quote = None
    i = 0
    while i < len(text):
        ch = text[i]
        if quote:
            if ch == "\\":
                i += 1
            elif ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "#":
            break
        elif ch in _OPENERS:
            stack.append(_OPENERS[ch])
        elif ch in ")]}":
            if not stack or stack.pop() != ch:
                return None
        i += 1
    if quote or not stack:
        return None
    return text + "".join(reversed(stack))
