"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

from contextlib import contextmanager

LINES: list[str] = []


@contextmanager
def criterion(label: str):
    """Record PASS or FAIL for the enclosed assertions, then re-raise on failure."""
    note: dict[str, str] = {}
    try:
        yield note
    except BaseException as exc:
        LINES.append(f"FAIL  {label}  {note.get('detail', '')}  ({type(exc).__name__}: {exc})".replace("\n", " "))
        print(LINES[-1])
        raise
    LINES.append(f"PASS  {label}  {note.get('detail', '')}".rstrip())
    print(LINES[-1])
