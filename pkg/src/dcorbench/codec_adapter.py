"""Drive external encoders/decoders through command templates.

A profile config is JSON::

    {
      "env_allowlist": ["PATH"],
      "profiles": [
        {"name": "hm-intra", "mode_label": "Intra",
         "encode_template": "TAppEncoder -c intra.cfg -i {input} -b {output} -wdt {width} -hgt {height} -f {frames} -q {qp}",
         "decode_template": "TAppDecoder -b {input} -o {output}",
         "yuv_format": "yuv420", "workdir_policy": "delete", "timeout_s": 3600}
      ]
    }

Templates are split with shell rules and executed without a shell.
"""
from __future__ import annotations

import json
import os
import shlex
import shutil
import string
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .errors import AdapterError, ConfigError

PLACEHOLDERS = ("input", "output", "width", "height", "frames", "qp")
MODE_LABELS = ("Intra", "LowDelay", "RandomAccess")
DEFAULT_QPS = (24, 28, 32, 36, 40)
DEFAULT_TIMEOUT_S = 3600.0


def _fields(template: str) -> set[str]:
    try:
        return {name for _, name, _, _ in string.Formatter().parse(template) if name is not None}
    except ValueError as exc:
        raise ConfigError(f"malformed template {template!r}: {exc}") from None


@dataclass(frozen=True)
class CodecProfile:
    name: str
    encode_template: str
    decode_template: str
    mode_label: str = "Intra"
    yuv_format: str = "yuv420"
    workdir_policy: str = "delete"
    timeout_s: float = DEFAULT_TIMEOUT_S
    env_allowlist: tuple[str, ...] = ("PATH",)

    def __post_init__(self):
        if not self.name:
            raise ConfigError("profile name must not be empty")
        if self.mode_label not in MODE_LABELS:
            raise ConfigError(f"{self.name}: mode_label must be one of {MODE_LABELS}")
        if self.yuv_format not in ("yuv420", "luma-only"):
            raise ConfigError(f"{self.name}: yuv_format must be yuv420 or luma-only")
        if self.workdir_policy not in ("delete", "keep"):
            raise ConfigError(f"{self.name}: workdir_policy must be 'delete' or 'keep'")
        if self.timeout_s <= 0:
            raise ConfigError(f"{self.name}: timeout must be positive")
        for label, tpl in (("encode_template", self.encode_template), ("decode_template", self.decode_template)):
            names = _fields(tpl)
            unknown = names - set(PLACEHOLDERS)
            if unknown:
                raise ConfigError(f"{self.name}: {label} uses unknown placeholders {sorted(unknown)}")
            missing = {"input", "output"} - names
            if missing:
                raise ConfigError(f"{self.name}: {label} lacks {sorted(missing)}")

    def check_sweep(self, qps) -> None:
        """Reject a QP sweep this profile cannot express, before anything runs."""
        if len(set(qps)) > 1 and "qp" not in _fields(self.encode_template):
            raise ConfigError(f"{self.name}: encode_template lacks {{qp}} but the sweep varies qp")


@dataclass
class ExternalResult:
    decoded_path: Path
    bitstream_path: Path
    size_bits: int
    logs: str
    workdir: Path = field(repr=False)

    def cleanup(self) -> None:
        shutil.rmtree(self.workdir, ignore_errors=True)


def load_profiles(path_or_doc) -> dict[str, CodecProfile]:
    """Load profiles from a JSON file path or an already-parsed document."""
    if isinstance(path_or_doc, dict):
        doc = path_or_doc
    else:
        try:
            doc = json.loads(Path(path_or_doc).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read codec config {path_or_doc}: {exc}") from None
    allow = tuple(doc.get("env_allowlist", ("PATH",)))
    profiles = {}
    for entry in doc.get("profiles", []):
        entry = dict(entry)
        entry.setdefault("env_allowlist", allow)
        entry["env_allowlist"] = tuple(entry["env_allowlist"])
        try:
            prof = CodecProfile(**entry)
        except TypeError as exc:
            raise ConfigError(f"bad profile entry: {exc}") from None
        if prof.name in profiles:
            raise ConfigError(f"duplicate profile name {prof.name!r}")
        profiles[prof.name] = prof
    if not profiles:
        raise ConfigError("codec config defines no profiles")
    return profiles


def _command(template: str, values: dict) -> list[str]:
    return [tok.format_map(values) for tok in shlex.split(template)]


def _run(cmd, env, cwd, timeout, what, logs):
    try:
        proc = subprocess.run(cmd, cwd=cwd, env=env, capture_output=True, text=True, timeout=timeout)
    except FileNotFoundError:
        raise AdapterError(f"{what}: executable not found: {cmd[0]}", "".join(logs)) from None
    except subprocess.TimeoutExpired as exc:
        out = (exc.stdout or "") if isinstance(exc.stdout, str) else ""
        raise AdapterError(f"{what}: timed out after {timeout:g} s", "".join(logs) + out) from None
    logs.append(f"$ {shlex.join(cmd)}\n{proc.stdout}{proc.stderr}")
    if proc.returncode != 0:
        raise AdapterError(f"{what}: exit status {proc.returncode}", "".join(logs))


def run_external(seq_file, profile: CodecProfile, qp: int, width: int, height: int, frames: int,
                 scratch_root=None) -> ExternalResult:
    """Encode then decode ``seq_file`` in a fresh scratch directory."""
    seq_file = Path(seq_file).resolve()
    if not seq_file.is_file():
        raise AdapterError(f"input file {seq_file} does not exist")
    workdir = Path(tempfile.mkdtemp(prefix=f"dcor-{profile.name}-q{qp}-", dir=scratch_root))
    bitstream = workdir / "bitstream.bin"
    decoded = workdir / "decoded.yuv"
    env = {k: os.environ[k] for k in profile.env_allowlist if k in os.environ}
    common = {"width": width, "height": height, "frames": frames, "qp": qp}
    logs: list[str] = []
    try:
        _run(_command(profile.encode_template, {**common, "input": str(seq_file), "output": str(bitstream)}),
             env, workdir, profile.timeout_s, "encode", logs)
        if not bitstream.is_file():
            raise AdapterError(f"encoder produced no output file {bitstream}", "".join(logs))
        _run(_command(profile.decode_template, {**common, "input": str(bitstream), "output": str(decoded)}),
             env, workdir, profile.timeout_s, "decode", logs)
        if not decoded.is_file():
            raise AdapterError(f"decoder produced no output file {decoded}", "".join(logs))
    except AdapterError:
        if profile.workdir_policy == "delete":
            shutil.rmtree(workdir, ignore_errors=True)
        raise
    return ExternalResult(decoded, bitstream, 8 * bitstream.stat().st_size, "".join(logs), workdir)
