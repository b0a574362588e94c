"""Run-directory persistence: records, locks, hashing, JSON/CSV helpers.

A run directory is owned by exactly one process at a time (lock file).
Every artifact a command produces is registered in the RunRecord, so a
directory can be audited for orphans.
"""

import csv
import hashlib
import json
import os
import time
from contextlib import contextmanager

RECORD_NAME = "run_record.json"
LOCK_NAME = ".lock"


class RunDirError(Exception):
    pass


def config_hash(cfg: dict) -> str:
    """Content hash of a config (canonical JSON)."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@contextmanager
def run_lock(run_dir):
    """Exclusive ownership of a run directory via an O_EXCL lock file."""
    os.makedirs(run_dir, exist_ok=True)
    path = os.path.join(run_dir, LOCK_NAME)
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RunDirError(f"run directory {run_dir} is locked by another process "
                          f"(remove {path} if that process is gone)")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield run_dir
    finally:
        if os.path.exists(path):
            os.remove(path)


class RunRecord:
    """Config echo + artifact registry + headline metrics for one run."""

    def __init__(self, run_dir, config: dict, command: str):
        self.run_dir = run_dir
        self.data = {
            "command": command,
            "config": config,
            "config_hash": config_hash(config),
            "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "finished": None,
            "artifacts": [RECORD_NAME],
            "headline": {},
        }

    def add_artifact(self, path):
        rel = os.path.relpath(path, self.run_dir)
        if rel not in self.data["artifacts"]:
            self.data["artifacts"].append(rel)
        return path

    def set_headline(self, **metrics):
        self.data["headline"].update(metrics)

    def save(self):
        self.data["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        path = os.path.join(self.run_dir, RECORD_NAME)
        write_json(path, self.data)
        return path


def load_record(run_dir) -> dict:
    path = os.path.join(run_dir, RECORD_NAME)
    if not os.path.isfile(path):
        raise RunDirError(f"no run record in {run_dir}")
    with open(path) as f:
        return json.load(f)


def find_orphans(run_dir):
    """Files in the run dir not registered in its record (lock excluded)."""
    record = load_record(run_dir)
    known = set(record["artifacts"]) | {LOCK_NAME}
    orphans = []
    for root, _, files in os.walk(run_dir):
        for name in files:
            rel = os.path.relpath(os.path.join(root, name), run_dir)
            if rel not in known:
                orphans.append(rel)
    return sorted(orphans)


def write_json(path, obj):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
    return path


def read_json(path):
    with open(path) as f:
        return json.load(f)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    return path
