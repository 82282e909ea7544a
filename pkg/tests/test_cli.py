import json
import logging
from pathlib import Path
from unittest.mock import patch

import pytest

from core.dependencies import settings
from core.settings import LOG_LEVEL_ENV, THREADS_ENV
from pipeline.main import build_parser, main


@pytest.fixture(autouse=True)
def restore_logging():
    """The CLI installs its own root handler; put pytest's back afterwards."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def error_line(capsys: pytest.CaptureFixture[str]) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_commands_are_required():
    with pytest.raises(SystemExit):
        _ = build_parser().parse_args([])


def test_inspect_prints_dataset_statistics(
    dataset_dir: Path, capsys: pytest.CaptureFixture[str]
):
    # Act
    code = main(["inspect", str(dataset_dir)])

    # Assert
    assert code == 0
    assert "# Dataset" in capsys.readouterr().out


def test_missing_manifest_exits_with_a_json_error(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
):
    # Act
    code = main(["densify", str(tmp_path / "nowhere")])

    # Assert
    assert code == 1
    payload = error_line(capsys)
    assert payload["error"] == "DatasetError"
    assert "manifest not found" in payload["message"]


def test_invalid_config_exits_with_a_json_error(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
):
    # Arrange
    config = tmp_path / "bad.toml"
    _ = config.write_text("[heatmap]\nk = 0\n", encoding="utf-8")

    # Act
    code = main(["gen-dataset", str(config), "--out", str(tmp_path / "out")])

    # Assert
    assert code == 1
    assert error_line(capsys)["error"] == "ValidationError"


def test_evaluate_needs_a_scorer(
    dataset_dir: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
):
    # Act
    code = main(["evaluate", str(dataset_dir), "--out", str(tmp_path)])

    # Assert
    assert code == 1
    assert error_line(capsys)["error"] == "AOGraspError"


def test_evaluate_random_baseline(
    dataset_dir: Path, tmp_path: Path, capsys: pytest.CaptureFixture[str]
):
    # Act
    code = main(
        [
            "evaluate",
            str(dataset_dir),
            "--random-scores",
            "--out",
            str(tmp_path),
            "--workers",
            "1",
        ]
    )

    # Assert
    assert code == 0
    assert capsys.readouterr().out.startswith("random: top-3 success rate")
    assert (tmp_path / "evaluation_results.json").is_file()


def test_propose_prints_the_proposal_file(
    checkpoint_path: Path,
    dataset_dir: Path,
    tmp_path: Path,
    capsys: pytest.CaptureFixture[str],
):
    # Arrange
    records = json.loads((dataset_dir / "manifest.json").read_text())["records"]
    record = next(r for r in records if r["status"] == "ok")

    # Act
    code = main(
        [
            "propose",
            str(checkpoint_path),
            str(dataset_dir / record["cloud_path"]),
            "-k",
            "3",
            "--out",
            str(tmp_path),
        ]
    )

    # Assert
    assert code == 0
    assert capsys.readouterr().out.strip() == str(tmp_path / "proposals.jsonl")
    assert len((tmp_path / "proposals.jsonl").read_text().splitlines()) == 3


@pytest.fixture
def fresh_settings():
    """Let a test's environment reach the cached settings provider."""
    settings.cache_clear()
    with patch("core.settings.load_dotenv", return_value=False):
        yield
    settings.cache_clear()


@pytest.mark.parametrize(
    ("name", "value"),
    [
        pytest.param(THREADS_ENV, "abc", id="threads-not-a-number"),
        pytest.param(THREADS_ENV, "0", id="threads-zero"),
        pytest.param(LOG_LEVEL_ENV, "loud", id="unknown-log-level"),
    ],
)
def test_bad_environment_exits_with_a_json_error(
    fresh_settings,
    monkeypatch: pytest.MonkeyPatch,
    tmp_path: Path,
    capsys: pytest.CaptureFixture[str],
    name: str,
    value: str,
):
    # Arrange
    monkeypatch.delenv(THREADS_ENV, raising=False)
    monkeypatch.delenv(LOG_LEVEL_ENV, raising=False)
    monkeypatch.setenv(name, value)

    # Act
    code = main(["inspect", str(tmp_path / "missing_manifest.json")])

    # Assert
    assert code == 1
    payload = error_line(capsys)
    assert payload["error"] == "InvalidParameterError"
    assert name in payload["message"]
