import struct

import numpy as np
import pytest

from paperpuf.db import formats
from paperpuf.errors import FormatError
from paperpuf.models.capture import LightConfig
from paperpuf.models.latent import CodecComponent
from paperpuf.services import latent_service
from paperpuf.services.optics_service import align, render


def test_norm_map_file_is_exact_at_float32(tmp_path, make_map):
    norm_map = make_map(seed=1, size=12)
    path = tmp_path / "maps" / "a.nmap"
    formats.save_norm_map(path, norm_map)
    loaded = formats.load_norm_map(path)
    assert loaded.equals(norm_map.at_file_precision())
    assert path.stat().st_size == 14 + 8 * 12 * 12


def test_norm_map_header_layout(make_map):
    payload = formats.encode_norm_map(make_map(size=4))
    magic, version, width, height = struct.unpack_from("<4sHII", payload)
    assert (magic, version, width, height) == (b"NMAP", 1, 4, 4)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda p: b"XMAP" + p[4:],
        lambda p: p[:-4],
        lambda p: p[:4] + struct.pack("<H", 9) + p[6:],
        lambda p: p[:10],
    ],
)
def test_corrupt_norm_maps_are_rejected(make_map, mutate):
    with pytest.raises(FormatError):
        formats.decode_norm_map(mutate(formats.encode_norm_map(make_map(size=4))))


def test_patch_file_round_trip(tmp_path, patch):
    path = tmp_path / "sheet.patch"
    formats.save_patch(path, patch)
    loaded = formats.load_patch(path)
    assert loaded.shape == patch.shape
    assert np.allclose(loaded.normals, patch.normals, atol=1e-6)
    assert np.allclose(np.linalg.norm(loaded.normals, axis=-1), 1.0)
    assert loaded.roughness == patch.roughness
    assert loaded.correlation_length == patch.correlation_length


def test_patch_file_is_header_planes_and_albedo_only(tmp_path, patch):
    path = tmp_path / "sheet.patch"
    formats.save_patch(path, patch)
    payload = path.read_bytes()
    count = patch.width * patch.height
    assert len(payload) == 14 + 16 * count
    assert struct.unpack_from("<4sHII", payload) == (b"PTCH", 1, patch.width, patch.height)
    albedo = np.frombuffer(payload, dtype="<f4", offset=14 + 12 * count)
    assert np.allclose(albedo.reshape(patch.shape), patch.albedo, atol=1e-6)
    assert formats.sidecar_path(path).name == "sheet.patch.json"


def test_patch_without_metadata_still_loads(tmp_path, patch):
    path = tmp_path / "bare.patch"
    path.write_bytes(formats.encode_patch(patch))
    loaded = formats.load_patch(path)
    assert loaded.shape == patch.shape
    assert loaded.roughness == 0.0


def test_codec_file_keeps_an_orthonormal_basis(tmp_path, make_map):
    codec = latent_service.fit([make_map(seed=s, size=8) for s in range(6)], 0.99)
    path = tmp_path / "x.lpc"
    formats.save_codec(path, codec)
    loaded = formats.load_codec(path)
    assert (loaded.m, loaded.d, loaded.component, loaded.field_shape) == (codec.m, codec.d, codec.component, (8, 8))
    assert np.allclose(loaded.basis @ loaded.basis.T, np.eye(codec.m), atol=1e-10)
    assert np.allclose(loaded.basis, codec.basis, atol=1e-5)
    assert loaded.total_variance == codec.total_variance


def test_codec_file_is_header_mean_basis_and_variances_only(tmp_path, make_map):
    codec = latent_service.fit([make_map(seed=s, size=8) for s in range(6)], 0.99, CodecComponent.Y)
    payload = formats.encode_codec(codec)
    assert struct.unpack_from("<4sII", payload) == (b"LPC1", codec.d, codec.m)
    assert len(payload) == 12 + 4 * (codec.d + codec.m * codec.d + codec.m)
    variances = np.frombuffer(payload, dtype="<f4", offset=len(payload) - 4 * codec.m)
    assert np.allclose(variances, codec.explained_variance, rtol=1e-6)
    path = tmp_path / "y.lpc"
    formats.save_codec(path, codec)
    assert formats.load_codec(path).component is CodecComponent.Y


def test_codec_without_metadata_is_read_as_square_x(make_map):
    codec = latent_service.fit([make_map(seed=s, size=8) for s in range(6)], 0.99, CodecComponent.Y)
    loaded = formats.decode_codec(formats.encode_codec(codec))
    assert loaded.field_shape == (8, 8)
    assert loaded.component is CodecComponent.X
    joint = latent_service.fit([make_map(seed=s, size=8) for s in range(6)], 0.99, CodecComponent.JOINT)
    with pytest.raises(FormatError):
        formats.decode_codec(formats.encode_codec(joint))


def test_pgm_is_sixteen_bit_big_endian():
    image = np.array([[0.0, 1.0], [256.0, 65535.0]])
    payload = formats.encode_pgm(image)
    assert payload.startswith(b"P5\n2 2\n65535\n")
    assert payload.endswith(bytes([0, 0, 0, 1, 1, 0, 255, 255]))
    assert np.array_equal(formats.decode_pgm(payload), image)


def test_pgm_header_comments_are_skipped():
    payload = b"P5\n# scanner\n1 1\n65535\n" + bytes([1, 2])
    assert formats.decode_pgm(payload)[0, 0] == 258


def test_capture_directory_round_trip(tmp_path, patch):
    shifts = np.array([[0, 0], [1, 0], [0, 2], [-1, -1]])
    capture = align(render(patch, LightConfig.mobile(4), noise_sigma=983.0, seed=3, shifts=shifts))
    formats.save_capture(tmp_path / "capture", capture)
    loaded = formats.load_capture(tmp_path / "capture")
    assert np.array_equal(loaded.images, capture.images)
    assert np.array_equal(loaded.misalignment, shifts)
    assert loaded.aligned and np.array_equal(loaded.recovered_offsets, capture.recovered_offsets)
    assert loaded.lights.mode is capture.lights.mode
    assert loaded.seed == 3


def test_broken_capture_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text("{}")
    with pytest.raises(FormatError):
        formats.load_capture(tmp_path)
