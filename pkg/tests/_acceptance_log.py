"""Shared registry so the acceptance suite can print one line per criterion
in the terminal summary, whether or not output capture is on."""

LINES: list[tuple[str, bool, str]] = []


def record(criterion: str, passed: bool, detail: str = "") -> None:
    LINES.append((criterion, passed, detail))
    status = "PASS" if passed else "FAIL"
    print(f"[acceptance] {criterion}: {status}  {detail}")
