"""Tensor archives for pretrained encoders and full-model checkpoints.

Archive layout: a .npz file mapping tensor names to raw arrays, plus a
sidecar `<path>.manifest.json` listing encoder family, tensor names, shapes
and sha256 checksums. Checkpoints use the same layout for the full model
state plus a `<path>.config.txt` with the ModelConfig as key=value lines.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ArchiveError, ParseError
from .model import ModelConfig, SegClsNet, build_model


@dataclass
class LoadManifest:
    loaded: list[str]
    skipped: list[str]


def _checksum(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def _save_tensors(state: dict, path: Path, meta: dict) -> None:
    arrays = {name: t.detach().cpu().numpy() for name, t in state.items()}
    np.savez(path, **arrays)
    manifest = dict(meta)
    manifest["tensors"] = [
        {"name": name, "shape": list(arr.shape), "sha256": _checksum(arr)}
        for name, arr in sorted(arrays.items())
    ]
    manifest_path = Path(str(path) + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _load_tensors(path: Path) -> tuple[dict, dict]:
    if not Path(path).exists():
        raise ArchiveError(f"archive not found: {path}")
    manifest_path = Path(str(path) + ".manifest.json")
    if not manifest_path.exists():
        raise ArchiveError(f"manifest not found: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    with np.load(path) as npz:
        arrays = {name: npz[name] for name in npz.files}
    return arrays, manifest


def save_encoder_archive(model: SegClsNet, path: str | Path) -> None:
    """Export the encoder weights (parameters and buffers) to an archive."""
    _save_tensors(
        model.encoder.state_dict(),
        Path(path),
        {"kind": "encoder", "encoder_family": model.config.encoder_family},
    )


def load_pretrained(model: SegClsNet, source: str | Path) -> LoadManifest:
    """Replace every encoder tensor from the archive; names and shapes must
    match exactly. Decoder and classifier keep their random initialization."""
    arrays, manifest = _load_tensors(Path(source))
    family = manifest.get("encoder_family")
    if family != model.config.encoder_family:
        raise ArchiveError(
            f"archive holds {family!r} encoder weights, model wants "
            f"{model.config.encoder_family!r}"
        )
    encoder_state = model.encoder.state_dict()
    missing = sorted(set(encoder_state) - set(arrays))
    if missing:
        raise ArchiveError(f"archive is missing encoder tensors: {missing}")
    new_state = {}
    for name, current in encoder_state.items():
        arr = arrays[name]
        if tuple(arr.shape) != tuple(current.shape):
            raise ArchiveError(
                f"tensor {name}: archive shape {tuple(arr.shape)} != model "
                f"shape {tuple(current.shape)}"
            )
        new_state[name] = torch.from_numpy(arr).to(current.dtype)
    model.encoder.load_state_dict(new_state)
    skipped = [
        f"(model) {name}"
        for name, _ in model.state_dict().items()
        if not name.startswith("encoder.")
    ]
    return LoadManifest(loaded=sorted(encoder_state), skipped=skipped)


def _config_to_text(config: ModelConfig) -> str:
    lines = []
    for key in (
        "encoder_family", "init_mode", "stages", "num_classes",
        "input_shape", "decoder_channels", "pretrained_source", "base_channels",
    ):
        value = getattr(config, key)
        if isinstance(value, (tuple, list)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {'' if value is None else value}")
    return "\n".join(lines) + "\n"


def _config_from_text(text: str) -> ModelConfig:
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"config line {line_no}: expected key = value")
        key, _, raw = line.partition("=")
        values[key.strip()] = raw.strip()
    cfg = ModelConfig(
        encoder_family=values["encoder_family"],
        init_mode=values["init_mode"],
        stages=int(values["stages"]),
        num_classes=int(values["num_classes"]),
        input_shape=tuple(int(v) for v in values["input_shape"].split(",")),
        decoder_channels=tuple(int(v) for v in values["decoder_channels"].split(",")),
        pretrained_source=values["pretrained_source"] or None,
        base_channels=int(values["base_channels"]),
    )
    return cfg


def save_checkpoint(model: SegClsNet, path: str | Path) -> None:
    """Persist the full model state plus its configuration."""
    path = Path(path)
    _save_tensors(
        model.state_dict(), path,
        {"kind": "checkpoint", "encoder_family": model.config.encoder_family},
    )
    Path(str(path) + ".config.txt").write_text(
        _config_to_text(model.config), encoding="utf-8"
    )


def load_checkpoint(path: str | Path) -> SegClsNet:
    path = Path(path)
    config_path = Path(str(path) + ".config.txt")
    if not config_path.exists():
        raise ArchiveError(f"checkpoint config not found: {config_path}")
    config = _config_from_text(config_path.read_text(encoding="utf-8"))
    # skip the pretrained-source requirement: the checkpoint holds final weights
    config.init_mode = "random"
    config.pretrained_source = None
    model = build_model(config)
    arrays, _ = _load_tensors(path)
    state = model.state_dict()
    missing = sorted(set(state) - set(arrays))
    if missing:
        raise ArchiveError(f"checkpoint is missing tensors: {missing}")
    model.load_state_dict(
        {name: torch.from_numpy(arrays[name]).to(t.dtype) for name, t in state.items()}
    )
    return model
