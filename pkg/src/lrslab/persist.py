"""Artifact persistence: atomic writes, canonical formatting, manifests.

Determinism contract: a command rerun with the same config and master seed
must reproduce its output files byte for byte. Floats are therefore always
rendered with ``repr`` (shortest round-trip form), rows are emitted in a
canonical order by the callers, and the manifest (which carries a timestamp)
is written last and excluded from byte-identity comparisons.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from pathlib import Path

from .schedules import ScheduleSpec, schedule_lrs, spec_from_dict, spec_to_dict

__all__ = [
    "OutputExistsError",
    "atomic_write_text",
    "config_hash",
    "export_schedule",
    "export_schedule_csv",
    "fmt",
    "import_schedule",
    "prepare_out_dir",
    "read_json",
    "write_csv",
    "write_json",
    "write_jsonl",
    "write_manifest",
    "write_schedule_json",
]

MANIFEST_NAME = "manifest.json"


class OutputExistsError(FileExistsError):
    """Output directory already holds artifacts and --force was not given."""


def fmt(x) -> str:
    """Canonical cell rendering: shortest round-trip repr for floats."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int,)):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    if x is None:
        return ""
    return str(x)


def atomic_write_text(path, text: str) -> None:
    """Write via a same-directory temp file and rename; never partial."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    width = len(header)
    for row in rows:
        if len(row) != width:
            raise ValueError(f"row width {len(row)} != header width {width}")
        lines.append(",".join(fmt(c) for c in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _canon_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ": "), indent=2)


def write_json(path, obj) -> None:
    atomic_write_text(path, _canon_json(obj) + "\n")


def write_jsonl(path, dicts) -> None:
    lines = [json.dumps(d, sort_keys=True, separators=(",", ":")) for d in dicts]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def config_hash(config: dict) -> str:
    """SHA-256 over the canonical JSON form of the config."""
    return hashlib.sha256(_canon_json(config).encode("utf-8")).hexdigest()


def prepare_out_dir(out_dir, force: bool = False) -> Path:
    """Create (or reuse with --force) the output directory.

    A directory that already contains a manifest or any artifact is treated
    as a collision unless force is set.
    """
    out = Path(out_dir)
    if out.exists():
        if not out.is_dir():
            raise OutputExistsError(f"{out} exists and is not a directory")
        existing = [p.name for p in out.iterdir() if not p.name.startswith(".")]
        if existing and not force:
            raise OutputExistsError(
                f"{out} already contains artifacts ({', '.join(sorted(existing)[:3])}"
                f"{', ...' if len(existing) > 3 else ''}); rerun with --force to overwrite"
            )
    else:
        out.mkdir(parents=True)
    return out


def write_manifest(out_dir, command: str, config: dict, master_seed: int, extra: dict | None = None) -> Path:
    """Write the manifest; callers must do this after all other artifacts."""
    from . import __version__

    manifest = {
        "command": command,
        "config_sha256": config_hash(config),
        "version": __version__,
        "master_seed": int(master_seed),
        "written_at_unix": time.time(),
    }
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / MANIFEST_NAME
    write_json(path, manifest)
    return path


# ---------------------------------------------------------------------------
# Schedule export / import
# ---------------------------------------------------------------------------


def export_schedule(spec: ScheduleSpec, resolution: int) -> list[tuple[int, float]]:
    """Sample (step, absolute LR) rows at the run's step convention.

    ``resolution`` rows cover steps 0 .. T-1 inclusive via nearest-index
    rounding, so the first row is always step 0 and the last is step T-1.
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    lrs = schedule_lrs(spec)
    T = spec.horizon
    rows = []
    seen = set()
    for j in range(resolution):
        t = int(math.floor(j * (T - 1) / (resolution - 1) + 0.5)) if T > 1 else 0
        if t in seen:
            continue
        seen.add(t)
        rows.append((t, float(lrs[t])))
    return rows


def export_schedule_csv(path, spec: ScheduleSpec, resolution: int) -> None:
    write_csv(path, ["step", "lr"], export_schedule(spec, resolution))


def write_schedule_json(path, spec: ScheduleSpec) -> None:
    write_json(path, spec_to_dict(spec))


def import_schedule(path) -> ScheduleSpec:
    """Inverse of write_schedule_json; value-exact for finite doubles."""
    return spec_from_dict(read_json(path))
