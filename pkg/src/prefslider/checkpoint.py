"""Versioned checkpoint persistence.

JSON with base64-encoded little-endian float64 parameter blobs: metadata stays
human-inspectable, numerics stay exact, and the canonical encoding (sorted
keys, fixed separators) makes save -> load -> save byte-identical.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config
from .flowpolicy import ConditionedVelocityNet, PolicyTriple
from .numcore import MlpParams, OptState
from .seeds import PRNG_ID

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _encode_array(a: np.ndarray) -> dict:
    arr = np.ascontiguousarray(a, dtype=np.float64)
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.astype("<f8").tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return arr.reshape(d["shape"])


def _encode_mlp(p: MlpParams) -> dict:
    return {
        "activation": p.activation,
        "layers": [{"weight": _encode_array(w), "bias": _encode_array(b)} for w, b in p.layers],
    }


def _decode_mlp(d: dict) -> MlpParams:
    layers = [(_decode_array(l["weight"]), _decode_array(l["bias"])) for l in d["layers"]]
    return MlpParams(layers, d["activation"])


def _encode_net(net: ConditionedVelocityNet) -> dict:
    return {
        "mode": net.mode,
        "data_dim": net.data_dim,
        "omega_dim": net.omega_dim,
        "enc_freqs": net.enc_freqs,
        "omega_enc_freqs": net.omega_enc_freqs,
        "trunk": _encode_mlp(net.trunk),
        "cond_projector": _encode_mlp(net.cond_projector),
    }


def _decode_net(d: dict) -> ConditionedVelocityNet:
    return ConditionedVelocityNet(
        trunk=_decode_mlp(d["trunk"]),
        cond_projector=_decode_mlp(d["cond_projector"]),
        mode=d["mode"],
        data_dim=d["data_dim"],
        omega_dim=d["omega_dim"],
        enc_freqs=d["enc_freqs"],
        omega_enc_freqs=d["omega_enc_freqs"],
    )


@dataclass
class Checkpoint:
    triple: PolicyTriple
    config: RunConfig
    step: int
    opt_state: OptState | None
    checkpoint_id: str


def _canonical_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def checkpoint_bytes(
    triple: PolicyTriple, config: RunConfig, step: int, opt_state: OptState | None = None
) -> bytes:
    doc = {
        "format_version": FORMAT_VERSION,
        "prng": PRNG_ID,
        "step": int(step),
        "config": config.model_dump(mode="json"),
        "nets": {
            "current": _encode_net(triple.current),
            "old": _encode_net(triple.old),
            "reference": _encode_net(triple.reference),
        },
    }
    if opt_state is not None:
        doc["opt_state"] = {
            "step": opt_state.step,
            "m": [_encode_array(a) for a in opt_state.m],
            "v": [_encode_array(a) for a in opt_state.v],
            "lr": opt_state.lr,
            "beta1": opt_state.beta1,
            "beta2": opt_state.beta2,
            "weight_decay": opt_state.weight_decay,
            "eps": opt_state.eps,
            "grad_clip": opt_state.grad_clip,
        }
    return _canonical_bytes(doc)


def save_checkpoint(
    path: str | Path,
    triple: PolicyTriple,
    config: RunConfig,
    step: int,
    opt_state: OptState | None = None,
) -> str:
    """Write the checkpoint; returns its content id (sha256 of the bytes)."""
    raw = checkpoint_bytes(triple, config, step, opt_state)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(raw)
    return hashlib.sha256(raw).hexdigest()[:16]


def load_checkpoint(path: str | Path) -> Checkpoint:
    p = Path(path)
    if not p.exists():
        raise CheckpointError(f"checkpoint not found: {p}")
    raw = p.read_bytes()
    try:
        doc = json.loads(raw)
        if doc.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format: {doc.get('format_version')}")
        if doc.get("prng") != PRNG_ID:
            raise CheckpointError(f"unsupported PRNG scheme: {doc.get('prng')}")
        config = parse_config(doc["config"])
        triple = PolicyTriple(
            current=_decode_net(doc["nets"]["current"]),
            old=_decode_net(doc["nets"]["old"]),
            reference=_decode_net(doc["nets"]["reference"]),
        )
        opt_state = None
        if "opt_state" in doc:
            o = doc["opt_state"]
            opt_state = OptState(
                m=[_decode_array(a) for a in o["m"]],
                v=[_decode_array(a) for a in o["v"]],
                step=o["step"],
                lr=o["lr"],
                beta1=o["beta1"],
                beta2=o["beta2"],
                weight_decay=o["weight_decay"],
                eps=o["eps"],
                grad_clip=o["grad_clip"],
            )
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"corrupt checkpoint {p}: {exc}") from exc
    return Checkpoint(
        triple=triple,
        config=config,
        step=int(doc["step"]),
        opt_state=opt_state,
        checkpoint_id=hashlib.sha256(raw).hexdigest()[:16],
    )
