import re
import subprocess
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
REPRODUCTION = REPO_ROOT / "docs" / "reproduction.md"


def reproduction_blocks() -> dict[str, list[str]]:
    """Fenced ```bash blocks of docs/reproduction.md keyed by section anchor.

    A section heading like '## A5 ...' owns every fenced block until the
    next heading.
    """
    text = REPRODUCTION.read_text()
    blocks: dict[str, list[str]] = {}
    current = None
    in_fence = False
    fence_lines: list[str] = []
    for line in text.splitlines():
        heading = re.match(r"#+\s+(A\d+|Setup)\b", line)
        if heading and not in_fence:
            current = heading.group(1).lower()
            continue
        if line.strip().startswith("```"):
            if in_fence:
                if current is not None:
                    blocks.setdefault(current, []).append("\n".join(fence_lines))
                fence_lines = []
                in_fence = False
            elif line.strip() == "```bash":
                in_fence = True
            continue
        if in_fence:
            fence_lines.append(line)
    return blocks


def run_doc_block(tag: str, timeout: int = 3600) -> None:
    """Execute every command block of one reproduction-guide section."""
    blocks = reproduction_blocks()
    if tag not in blocks:
        raise AssertionError(f"reproduction guide has no section {tag!r}")
    for script in blocks[tag]:
        script = script.replace("python ", f"{sys.executable} ")
        result = subprocess.run(["bash", "-ceu", script], cwd=REPO_ROOT,
                                capture_output=True, text=True, timeout=timeout)
        if result.returncode != 0:
            raise AssertionError(
                f"doc block {tag!r} failed ({result.returncode}):\n{script}\n"
                f"stdout:\n{result.stdout[-2000:]}\nstderr:\n{result.stderr[-2000:]}"
            )


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return REPO_ROOT
