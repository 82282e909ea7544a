"""
Run every toolkit sample in turn.

Samples import the ``core`` and ``pipeline`` packages, so ``src`` is put on
``PYTHONPATH`` for each run. The script exits 1 if any sample fails.
"""

import os
import subprocess
import sys
import time
from pathlib import Path


def sample_environment(repo_root: Path) -> dict[str, str]:
    env = dict(os.environ)
    src = str(repo_root / "src")
    env["PYTHONPATH"] = os.pathsep.join(filter(None, [src, env.get("PYTHONPATH")]))
    return env


def main() -> int:
    samples_dir = Path(__file__).parent
    sample_files = sorted(
        f for f in samples_dir.glob("*.py") if f.name != Path(__file__).name
    )
    if not sample_files:
        print("No sample files found.")
        return 0

    env = sample_environment(samples_dir.parent)
    failed: list[str] = []
    for i, sample_file in enumerate(sample_files, 1):
        print(f"\n[{i}/{len(sample_files)}] {sample_file.name}")
        print("-" * 80)
        started = time.perf_counter()
        result = subprocess.run(
            [sys.executable, str(sample_file)],
            cwd=samples_dir.parent,
            env=env,
            check=False,
        )
        elapsed = time.perf_counter() - started
        status = "ok" if result.returncode == 0 else f"exit {result.returncode}"
        print(f"-- {sample_file.name}: {status} in {elapsed:.1f}s")
        if result.returncode != 0:
            failed.append(sample_file.name)

    print("\n" + "=" * 80)
    if failed:
        print(f"{len(failed)} sample(s) failed: {', '.join(failed)}")
        return 1
    print(f"All {len(sample_files)} samples completed.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
