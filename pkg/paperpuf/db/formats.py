"""
Binary file formats: .nmap norm maps, .patch surfaces, .lpc codecs and 16-bit PGM images.

All multi-byte header fields and float payloads are little-endian except PGM
samples, which follow the PGM convention (big-endian). Patch generation parameters and
codec field shapes live in a JSON sidecar next to the binary file.
"""

from pathlib import Path
from typing import List, Optional, Tuple, Union
import math
import os
import struct
import tempfile

import numpy as np
from pydantic import BaseModel, Field

from paperpuf.errors import FormatError, InvalidParam, StorageFailure
from paperpuf.models.capture import CaptureMode, CaptureSet, LightConfig
from paperpuf.models.latent import CodecComponent, LatentCodec
from paperpuf.models.normmap import NormMap
from paperpuf.models.surface import SurfacePatch

PathLike = Union[str, Path]

NMAP_MAGIC = b"NMAP"
PATCH_MAGIC = b"PTCH"
LPC_MAGIC = b"LPC1"
FORMAT_VERSION = 1

_NMAP_HEADER = struct.Struct("<4sHII")
_PATCH_HEADER = struct.Struct("<4sHII")
_LPC_HEADER = struct.Struct("<4sII")


def _f32(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f4").tobytes()


def _read_f32(payload: bytes, offset: int, count: int) -> Tuple[np.ndarray, int]:
    end = offset + 4 * count
    if end > len(payload):
        raise FormatError("file is truncated")
    return np.frombuffer(payload, dtype="<f4", count=count, offset=offset).astype(np.float64), end


def write_atomic(path: PathLike, payload: bytes) -> None:
    """Write bytes to a sibling temp file and rename it over the target."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except OSError as e:
        raise StorageFailure(f"could not write {path}: {e}") from e


def _read(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise StorageFailure(f"could not read {path}: {e}") from e


# --- .nmap ---------------------------------------------------------------

def encode_norm_map(norm_map: NormMap) -> bytes:
    header = _NMAP_HEADER.pack(NMAP_MAGIC, FORMAT_VERSION, norm_map.width, norm_map.height)
    return header + _f32(norm_map.nx) + _f32(norm_map.ny)


def decode_norm_map(payload: bytes) -> NormMap:
    if len(payload) < _NMAP_HEADER.size:
        raise FormatError("norm map file is truncated")
    magic, version, width, height = _NMAP_HEADER.unpack_from(payload)
    if magic != NMAP_MAGIC:
        raise FormatError(f"bad norm map magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported norm map version {version}")
    count = width * height
    if len(payload) != _NMAP_HEADER.size + 8 * count:
        raise FormatError("norm map payload length does not match its header")
    nx, offset = _read_f32(payload, _NMAP_HEADER.size, count)
    ny, _ = _read_f32(payload, offset, count)
    return NormMap(nx.reshape(height, width), ny.reshape(height, width))


def save_norm_map(path: PathLike, norm_map: NormMap) -> None:
    write_atomic(path, encode_norm_map(norm_map))


def load_norm_map(path: PathLike) -> NormMap:
    return decode_norm_map(_read(path))


# --- sidecars ------------------------------------------------------------

class PatchMetadata(BaseModel):
    correlation_length: float = Field(0.0, ge=0)
    roughness: float = Field(0.0, ge=0)


class CodecMetadata(BaseModel):
    height: int = Field(..., ge=1)
    width: int = Field(..., ge=1)
    component: CodecComponent = CodecComponent.X
    total_variance: float = Field(0.0, ge=0)


def sidecar_path(path: PathLike) -> Path:
    """JSON metadata kept next to a binary file: <name>.json."""
    path = Path(path)
    return path.with_name(path.name + ".json")


def _save_sidecar(path: PathLike, metadata: BaseModel) -> None:
    write_atomic(sidecar_path(path), metadata.model_dump_json(indent=2).encode("utf-8"))


def _load_sidecar(path: PathLike, model: type) -> Optional[BaseModel]:
    sidecar = sidecar_path(path)
    if not sidecar.exists():
        return None
    try:
        return model.model_validate_json(_read(sidecar))
    except ValueError as e:
        raise FormatError(f"invalid metadata in {sidecar}: {e}") from e


# --- .patch --------------------------------------------------------------

def encode_patch(patch: SurfacePatch) -> bytes:
    header = _PATCH_HEADER.pack(PATCH_MAGIC, FORMAT_VERSION, patch.width, patch.height)
    planes = b"".join(_f32(patch.normals[..., i]) for i in range(3))
    return header + planes + _f32(patch.albedo)


def decode_patch(payload: bytes, metadata: Optional[PatchMetadata] = None) -> SurfacePatch:
    """
    Decode a patch; normals are renormalized in float64 after float32 storage.

    The generation parameters are not part of the binary layout; they come from
    ``metadata`` and are 0 when it is absent.
    """
    if len(payload) < _PATCH_HEADER.size:
        raise FormatError("patch file is truncated")
    magic, version, width, height = _PATCH_HEADER.unpack_from(payload)
    if magic != PATCH_MAGIC:
        raise FormatError(f"bad patch magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported patch version {version}")
    count = width * height
    if len(payload) != _PATCH_HEADER.size + 16 * count:
        raise FormatError("patch payload length does not match its header")
    offset = _PATCH_HEADER.size
    planes = []
    for _ in range(4):
        plane, offset = _read_f32(payload, offset, count)
        planes.append(plane.reshape(height, width))
    normals = np.stack(planes[:3], axis=-1)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    metadata = metadata or PatchMetadata()
    return SurfacePatch(normals, planes[3], metadata.correlation_length, metadata.roughness)


def save_patch(path: PathLike, patch: SurfacePatch) -> None:
    write_atomic(path, encode_patch(patch))
    _save_sidecar(path, PatchMetadata(correlation_length=patch.correlation_length, roughness=patch.roughness))


def load_patch(path: PathLike) -> SurfacePatch:
    return decode_patch(_read(path), _load_sidecar(path, PatchMetadata))


# --- .lpc ----------------------------------------------------------------

def encode_codec(codec: LatentCodec) -> bytes:
    header = _LPC_HEADER.pack(LPC_MAGIC, codec.d, codec.m)
    return header + _f32(codec.mean) + _f32(codec.basis) + _f32(codec.explained_variance)


def codec_metadata(codec: LatentCodec) -> CodecMetadata:
    return CodecMetadata(
        height=codec.height, width=codec.width, component=codec.component, total_variance=codec.total_variance
    )


def _default_codec_metadata(d: int) -> CodecMetadata:
    side = math.isqrt(d)
    if side * side != d:
        raise FormatError(f"codec of dimension {d} needs a metadata file to give its field shape")
    return CodecMetadata(height=side, width=side)


def decode_codec(payload: bytes, metadata: Optional[CodecMetadata] = None) -> LatentCodec:
    """
    Decode a codec. Basis rows are re-orthonormalized after float32 storage,
    keeping each row's sign.

    Without ``metadata`` the codec is read as a square single-component x codec.
    """
    if len(payload) < _LPC_HEADER.size:
        raise FormatError("codec file is truncated")
    magic, d, m = _LPC_HEADER.unpack_from(payload)
    if magic != LPC_MAGIC:
        raise FormatError(f"bad codec magic {magic!r}")
    if len(payload) != _LPC_HEADER.size + 4 * (d + m * d + m):
        raise FormatError("codec payload length does not match its header")
    if m < 1 or d < 1:
        raise FormatError(f"codec dimensions d={d}, m={m} must be positive")
    metadata = metadata or _default_codec_metadata(d)
    mean, offset = _read_f32(payload, _LPC_HEADER.size, d)
    basis, offset = _read_f32(payload, offset, m * d)
    variance, _ = _read_f32(payload, offset, m)
    q, r = np.linalg.qr(basis.reshape(m, d).T)
    q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
    try:
        return LatentCodec(
            mean=mean,
            basis=q.T,
            explained_variance=variance,
            height=metadata.height,
            width=metadata.width,
            component=metadata.component,
            total_variance=metadata.total_variance,
        )
    except InvalidParam as e:
        raise FormatError(f"codec does not match its metadata: {e}") from e


def save_codec(path: PathLike, codec: LatentCodec) -> None:
    write_atomic(path, encode_codec(codec))
    _save_sidecar(path, codec_metadata(codec))


def load_codec(path: PathLike) -> LatentCodec:
    return decode_codec(_read(path), _load_sidecar(path, CodecMetadata))


# --- PGM -----------------------------------------------------------------

def encode_pgm(image: np.ndarray) -> bytes:
    samples = np.clip(np.rint(image), 0, 65535).astype(">u2")
    height, width = samples.shape
    return f"P5\n{width} {height}\n65535\n".encode("ascii") + samples.tobytes()


def decode_pgm(payload: bytes) -> np.ndarray:
    tokens: List[bytes] = []
    position = 0
    while len(tokens) < 4:
        while position < len(payload) and payload[position:position + 1].isspace():
            position += 1
        if payload[position:position + 1] == b"#":
            while position < len(payload) and payload[position:position + 1] != b"\n":
                position += 1
            continue
        start = position
        while position < len(payload) and not payload[position:position + 1].isspace():
            position += 1
        if start == position:
            raise FormatError("PGM header is truncated")
        tokens.append(payload[start:position])
    position += 1
    if tokens[0] != b"P5":
        raise FormatError(f"not a binary PGM: {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 65535:
        raise FormatError(f"expected 16-bit PGM, maxval={maxval}")
    body = payload[position:position + 2 * width * height]
    if len(body) != 2 * width * height:
        raise FormatError("PGM samples are truncated")
    return np.frombuffer(body, dtype=">u2").reshape(height, width).astype(np.float64)


# --- capture directories -------------------------------------------------

class CaptureManifest(BaseModel):
    mode: CaptureMode
    intensity: float
    directions: List[List[float]]
    misalignment: List[List[int]]
    noise_sigma: float = Field(..., ge=0)
    max_shift: int = Field(..., ge=0)
    aligned: bool = False
    recovered_offsets: Optional[List[List[int]]] = None
    alignment_ncc: Optional[List[float]] = None
    seed: Optional[int] = None
    specular_weight: float = 0.0
    specular_exponent: float = 20.0
    images: List[str]


def save_capture(directory: PathLike, capture: CaptureSet) -> None:
    directory = Path(directory)
    names = [f"image_{i:02d}.pgm" for i in range(capture.count)]
    for name, image in zip(names, capture.images):
        write_atomic(directory / name, encode_pgm(image))
    manifest = CaptureManifest(
        mode=capture.lights.mode,
        intensity=capture.lights.intensity,
        directions=capture.lights.directions.tolist(),
        misalignment=capture.misalignment.tolist(),
        noise_sigma=capture.noise_sigma,
        max_shift=capture.max_shift,
        aligned=capture.aligned,
        recovered_offsets=None if capture.recovered_offsets is None else capture.recovered_offsets.tolist(),
        alignment_ncc=None if capture.alignment_ncc is None else list(capture.alignment_ncc),
        seed=capture.seed,
        specular_weight=capture.specular_weight,
        specular_exponent=capture.specular_exponent,
        images=names,
    )
    write_atomic(directory / "manifest.json", manifest.model_dump_json(indent=2).encode("utf-8"))


def load_capture(directory: PathLike) -> CaptureSet:
    directory = Path(directory)
    try:
        manifest = CaptureManifest.model_validate_json(_read(directory / "manifest.json"))
    except ValueError as e:
        raise FormatError(f"invalid capture manifest in {directory}: {e}") from e
    images = np.stack([decode_pgm(_read(directory / name)) for name in manifest.images])
    return CaptureSet(
        images=images,
        lights=LightConfig(np.array(manifest.directions), manifest.intensity, manifest.mode),
        misalignment=np.array(manifest.misalignment),
        noise_sigma=manifest.noise_sigma,
        max_shift=manifest.max_shift,
        aligned=manifest.aligned,
        recovered_offsets=None if manifest.recovered_offsets is None else np.array(manifest.recovered_offsets),
        alignment_ncc=None if manifest.alignment_ncc is None else tuple(manifest.alignment_ncc),
        seed=manifest.seed,
        specular_weight=manifest.specular_weight,
        specular_exponent=manifest.specular_exponent,
    )
