"""CSV and manifest emission.

Every CSV uses '.' decimals, 17-significant-digit round-trip floats, LF line
endings and a header row; every output file is listed in the run manifest
with its sha256, next to the fully resolved configuration that reproduces it.
"""

import hashlib
import json
import os
import time

from . import __version__, backend_name


def fmt_value(x):
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return "%d" % x
    return "%.17g" % x


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_value(x) for x in row) + "\n")


def read_csv(path):
    """Read a numeric CSV written by write_csv; returns (header, columns)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    cols = [[float(r[j]) for r in rows] for j in range(len(header))]
    return header, cols


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class RunWriter:
    """Collects outputs of one command and finalizes the manifest."""

    def __init__(self, out_dir, command, config, workers=1):
        self.out_dir = out_dir
        self.command = command
        self.config = config
        self.workers = workers
        self.outputs = {}
        self._t0 = time.perf_counter()
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def add_csv(self, name, header, rows):
        p = self.path(name)
        write_csv(p, header, rows)
        self.outputs[name] = sha256_file(p)
        return p

    def add_file(self, name):
        self.outputs[name] = sha256_file(self.path(name))

    def finalize(self, extra=None):
        manifest = {
            "command": self.command,
            "version": __version__,
            "backend": backend_name(),
            "config": self.config,
            "workers": self.workers,
            "reduction_order": "realization-index sequential",
            "outputs": self.outputs,
            "wall_clock_seconds": time.perf_counter() - self._t0,
        }
        if extra:
            manifest.update(extra)
        p = self.path(f"manifest_{self.command.replace('-', '_')}.json")
        with open(p, "w", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p


def load_manifest(path):
    with open(path) as fh:
        return json.load(fh)


def parse_config_file(path):
    """Flat KEY=VALUE lines; '#' starts a comment, blank lines ignored."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected KEY=VALUE")
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out
