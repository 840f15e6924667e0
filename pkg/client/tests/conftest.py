"""Fixtures that reach the episode server only through its published
surfaces: the serve/sample command line, the pack file schema, and the task
config file schema. Nothing here imports the server's implementation."""

import json
import subprocess
import sys

import pytest

from wire_schema import TASK, write_pack_files


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("wire")
    pack_dir = root / "pack"
    manifest = write_pack_files(pack_dir)
    blob = (pack_dir / "blob.bin").read_bytes()
    config_path = root / "task.json"
    config_path.write_text(json.dumps(TASK, sort_keys=True, separators=(",", ":")) + "\n")
    return {"root": root, "pack_dir": pack_dir, "manifest": manifest, "blob": blob,
            "config_path": config_path}


@pytest.fixture(scope="session")
def server(workspace):
    proc = subprocess.Popen(
        [sys.executable, "-m", "cfslbench", "serve",
         "--pack", str(workspace["pack_dir"]),
         "--config", str(workspace["config_path"]),
         "--bind", "127.0.0.1:0"],
        stdout=subprocess.PIPE, text=True,
    )
    line = proc.stdout.readline().strip()
    assert line.startswith("listening on "), f"unexpected server banner: {line!r}"
    host, port = line.removeprefix("listening on ").rsplit(":", 1)
    yield (host, int(port))
    proc.terminate()
    proc.wait(timeout=10)


@pytest.fixture(scope="session")
def episode_manifests(workspace):
    """Episode manifests 0..99 written by the sampling command line."""
    out_dir = workspace["root"] / "episodes"
    subprocess.run(
        [sys.executable, "-m", "cfslbench", "sample",
         "--pack", str(workspace["pack_dir"]),
         "--config", str(workspace["config_path"]),
         "--count", "100", "--out", str(out_dir)],
        check=True, capture_output=True,
    )
    manifests = []
    for i in range(100):
        manifests.append(json.loads((out_dir / f"episode_{i:06d}.json").read_text()))
    return manifests
