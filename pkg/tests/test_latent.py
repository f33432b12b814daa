import numpy as np
import pytest

from paperpuf.errors import DimensionMismatch, InsufficientData
from paperpuf.models.latent import CodecComponent
from paperpuf.models.normmap import NormMap
from paperpuf.services import latent_service


@pytest.fixture
def holdout(make_map):
    return [make_map(seed=seed, size=8) for seed in range(12)]


def test_snapshot_pca_matches_dense_covariance(holdout):
    codec = latent_service.fit(holdout, variance_target=1.0, component=CodecComponent.X)
    data = np.vstack([m.nx.ravel() for m in holdout])
    covariance = np.cov(data, rowvar=False)
    values, vectors = np.linalg.eigh(covariance)
    values, vectors = values[::-1], vectors[:, ::-1]

    assert codec.m == len(holdout) - 1
    assert np.allclose(codec.explained_variance, values[: codec.m], rtol=1e-8, atol=1e-12)
    overlap = np.abs(np.sum(codec.basis * vectors[:, : codec.m].T, axis=1))
    assert np.allclose(overlap, 1.0, atol=1e-8)
    assert np.allclose(codec.mean, data.mean(axis=0))


def test_basis_is_orthonormal_and_sign_fixed(holdout):
    codec = latent_service.fit(holdout, variance_target=0.95)
    assert np.allclose(codec.basis @ codec.basis.T, np.eye(codec.m), atol=1e-10)
    pivots = np.argmax(np.abs(codec.basis), axis=1)
    assert np.all(codec.basis[np.arange(codec.m), pivots] > 0)
    assert np.all(np.diff(codec.explained_variance) <= 1e-15)


def test_smallest_axis_count_reaching_the_target(holdout):
    target = 0.8
    codec = latent_service.fit(holdout, variance_target=target)
    cumulative = np.cumsum(codec.explained_fraction)
    assert cumulative[-1] >= target - 1e-12
    if codec.m > 1:
        assert cumulative[-2] < target
    retained = float(np.sum(codec.explained_variance))
    assert codec.total_variance - retained <= (1.0 - target) * codec.total_variance + 1e-12


def test_holdout_members_reconstruct_exactly_at_full_variance(holdout):
    codec = latent_service.fit(holdout, variance_target=1.0)
    for norm_map in holdout[:3]:
        assert latent_service.reconstruction_error(codec, norm_map) < 1e-8


def test_decode_keeps_the_companion_field(holdout):
    codec_x, codec_y = latent_service.fit_pair(holdout, 0.99)
    companion = holdout[0]
    decoded = latent_service.decode(codec_x, np.zeros(codec_x.m), companion)
    assert np.array_equal(decoded.ny, companion.ny)
    assert np.allclose(decoded.nx, codec_x.mean.reshape(8, 8))
    assert not latent_service.mean_map(codec_y).nx.any()


def test_joint_codec_decodes_both_fields(holdout):
    codec = latent_service.fit(holdout, 1.0, CodecComponent.JOINT)
    assert codec.d == 2 * 64
    z = latent_service.encode(codec, holdout[4])
    decoded = latent_service.decode(codec, z)
    assert np.allclose(decoded.nx, holdout[4].nx, atol=1e-8)
    assert np.allclose(decoded.ny, holdout[4].ny, atol=1e-8)


def test_decode_clamps_onto_the_unit_disk(holdout):
    codec = latent_service.fit(holdout, 1.0)
    decoded = latent_service.decode(codec, 1e3 * np.ones(codec.m))
    assert np.max(decoded.nx**2 + decoded.ny**2) <= 1.0 + 1e-9


def test_fit_needs_two_distinct_maps(make_map):
    with pytest.raises(InsufficientData):
        latent_service.fit([make_map(seed=1)])
    same = make_map(seed=2)
    with pytest.raises(InsufficientData):
        latent_service.fit([same, same, same])


def test_fit_and_decode_check_dimensions(holdout, make_map):
    with pytest.raises(DimensionMismatch):
        latent_service.fit(holdout + [make_map(size=4)])
    codec = latent_service.fit(holdout, 0.99)
    with pytest.raises(DimensionMismatch):
        latent_service.decode(codec, np.zeros(codec.m + 1))
    with pytest.raises(DimensionMismatch):
        latent_service.encode(codec, NormMap.zeros(4, 4))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_encode_inverts_decode_inside_the_disk(holdout, seed):
    codec = latent_service.fit(holdout, 0.99)
    z = 0.5 * codec.axis_scale * np.random.default_rng(seed).standard_normal(codec.m)
    assert np.allclose(latent_service.encode(codec, latent_service.decode(codec, z)), z, atol=1e-9)


def test_clipping_moves_only_the_decoded_field(holdout):
    codec_x, _ = latent_service.fit_pair(holdout, 0.99)
    companion = NormMap(np.zeros((8, 8)), np.full((8, 8), 0.8))
    decoded = latent_service.decode(codec_x, 1e3 * np.ones(codec_x.m), companion)
    assert np.array_equal(decoded.ny, companion.ny)
    assert np.max(np.abs(decoded.nx)) <= 0.6 + 1e-12
    assert np.max(decoded.nx**2 + decoded.ny**2) <= 1.0 + 1e-9
