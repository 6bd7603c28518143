"""Output files: CSV with round-trip floats, JSON, atomic publication."""
from __future__ import annotations

import json
import os
import shutil
import tempfile

import numpy as np

from .. import __version__


def fmt(v) -> str:
    """Shortest round-trip text for numbers; ``repr`` of a Python float."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return "/".join(fmt(x) for x in np.ravel(np.asarray(v, dtype=object)))
    return str(v)


def meta_line(config_hash: str, seed: int) -> str:
    return f"# mvflow {__version__} config_sha256={config_hash} seed={seed}\n"


def csv_text(columns, rows, config_hash: str, seed: int) -> str:
    out = [meta_line(config_hash, seed), ",".join(columns) + "\n"]
    out.extend(",".join(fmt(v) for v in row) + "\n" for row in rows)
    return "".join(out)


def json_text(payload: dict, config_hash: str, seed: int) -> str:
    body = dict(payload)
    body["meta"] = {"version": __version__, "config_sha256": config_hash, "seed": seed}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


class OutputSet:
    """Collects files in memory and publishes them together.

    Nothing reaches ``out_dir`` until :meth:`publish`; each file is
    written to a temporary sibling and moved in with ``os.replace``.
    """

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def publish(self) -> list[str]:
        os.makedirs(self.out_dir, exist_ok=True)
        stage = tempfile.mkdtemp(prefix=".mvflow-", dir=self.out_dir)
        try:
            for name, text in self.files.items():
                with open(os.path.join(stage, name), "w", encoding="utf-8", newline="\n") as fh:
                    fh.write(text)
            paths = []
            for name in self.files:
                dest = os.path.join(self.out_dir, name)
                os.replace(os.path.join(stage, name), dest)
                paths.append(dest)
            return paths
        finally:
            shutil.rmtree(stage, ignore_errors=True)


def read_numeric(path: str) -> list[list[str]]:
    """Rows of a CSV output without the metadata line (for comparisons)."""
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n").split(",") for line in fh if not line.startswith("#")]
