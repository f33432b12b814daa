from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh

from paperpuf.errors import DimensionMismatch, InsufficientData, InvalidParam
from paperpuf.middleware.logging import logger
from paperpuf.models.latent import CodecComponent, LatentCodec
from paperpuf.models.normmap import NormMap

# eigenvalues below this fraction of the largest are treated as zero
_RANK_TOLERANCE = 1e-12


def feature_matrix(maps: Sequence[NormMap], component: CodecComponent | str) -> np.ndarray:
    """Stack maps into an N x d matrix of the chosen component(s)."""
    component = CodecComponent(component)
    if component is CodecComponent.X:
        rows = [m.nx.ravel() for m in maps]
    elif component is CodecComponent.Y:
        rows = [m.ny.ravel() for m in maps]
    else:
        rows = [np.concatenate([m.nx.ravel(), m.ny.ravel()]) for m in maps]
    return np.vstack(rows)


def fit(
    holdout: Sequence[NormMap],
    variance_target: float = 0.99,
    component: CodecComponent | str = CodecComponent.X,
) -> LatentCodec:
    """
    Fit a PCA codec to the holdout maps with the snapshot method.

    The N x N Gram matrix of the centred data is eigendecomposed; axes are
    v_i = X_c^T u_i / sqrt(mu_i) and the sample variances mu_i / (N - 1). The
    smallest m whose cumulative variance reaches the target is kept. Each axis
    is signed so that its largest-magnitude entry is positive.

    Args:
        holdout: At least two maps of identical size
        variance_target: Fraction of total variance to retain, in (0, 1]
        component: 'x' or 'y' for a per-component codec, 'joint' for both

    Returns:
        LatentCodec

    Raises:
        InsufficientData: If fewer than two maps are given, or all maps are identical
        DimensionMismatch: If map sizes differ
    """
    if len(holdout) < 2:
        raise InsufficientData(f"PCA needs at least 2 maps, got {len(holdout)}")
    if not 0.0 < variance_target <= 1.0:
        raise InvalidParam(f"variance_target must lie in (0, 1], got {variance_target}")
    shape = holdout[0].shape
    if any(m.shape != shape for m in holdout):
        raise DimensionMismatch("holdout maps must share one size")

    component = CodecComponent(component)
    data = feature_matrix(holdout, component)
    if not np.ptp(data, axis=0).any():
        raise InsufficientData("holdout maps are identical; there is no variance to model")
    n = data.shape[0]
    mean = data.mean(axis=0)
    centered = data - mean

    gram = centered @ centered.T
    eigenvalues, eigenvectors = eigh(gram)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues, eigenvectors = eigenvalues[order], eigenvectors[:, order]

    if eigenvalues[0] <= 0:
        raise InsufficientData("holdout maps have no variance to model")
    rank = int(np.sum(eigenvalues > _RANK_TOLERANCE * eigenvalues[0]))
    eigenvalues, eigenvectors = eigenvalues[:rank], eigenvectors[:, :rank]

    cumulative = np.cumsum(eigenvalues) / np.sum(eigenvalues)
    m = int(np.searchsorted(cumulative, variance_target - 1e-12) + 1)
    m = min(m, rank, n - 1)

    axes = (centered.T @ eigenvectors[:, :m]) / np.sqrt(eigenvalues[:m])
    basis = axes.T
    # a second orthonormalization pass removes round-off from the Gram route
    q, r = np.linalg.qr(basis.T)
    basis = (q * np.sign(np.diag(r))).T
    pivots = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(m), pivots])
    basis = basis * signs[:, None]

    total_variance = float(np.sum(centered * centered) / (n - 1))
    codec = LatentCodec(
        mean=mean,
        basis=basis,
        explained_variance=eigenvalues[:m] / (n - 1),
        height=shape[0],
        width=shape[1],
        component=component,
        total_variance=total_variance,
    )
    logger.info(
        f"Fitted {component.value} codec: N={n}, d={codec.d}, m={m}, "
        f"explained {float(np.sum(codec.explained_fraction)):.4f}"
    )
    return codec


def _vector(codec: LatentCodec, norm_map: NormMap) -> np.ndarray:
    if norm_map.shape != codec.field_shape:
        raise DimensionMismatch(f"map {norm_map.shape} vs codec {codec.field_shape}")
    return feature_matrix([norm_map], codec.component)[0]


def encode(codec: LatentCodec, norm_map: NormMap) -> np.ndarray:
    """z = B (x - mu)."""
    return codec.basis @ (_vector(codec, norm_map) - codec.mean)


def decode_vector(codec: LatentCodec, z: np.ndarray) -> np.ndarray:
    """Unclamped reconstruction mu + B^T z in feature space."""
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size != codec.m:
        raise DimensionMismatch(f"latent vector has {z.size} entries, codec has {codec.m}")
    return codec.mean + codec.basis.T @ z


def decode(codec: LatentCodec, z: np.ndarray, companion: Optional[NormMap] = None) -> NormMap:
    """
    Map a latent vector back to a norm map, clamping pixels onto the unit disk.

    A per-component codec fills only its own field and clips it where a pixel
    exits the disk; the other field is taken unchanged from ``companion`` or is zero.
    """
    vector = decode_vector(codec, z)
    height, width = codec.field_shape
    if codec.component is CodecComponent.JOINT:
        half = height * width
        return NormMap.from_components(vector[:half].reshape(height, width), vector[half:].reshape(height, width))
    base = companion if companion is not None else NormMap.zeros(height, width)
    if base.shape != codec.field_shape:
        raise DimensionMismatch(f"companion {base.shape} vs codec {codec.field_shape}")
    return base.with_component(codec.component.value, vector)


def mean_map(codec: LatentCodec, companion: Optional[NormMap] = None) -> NormMap:
    return decode(codec, np.zeros(codec.m), companion)


def reconstruction_error(codec: LatentCodec, norm_map: NormMap) -> float:
    """Relative l2 error of the unclamped projection of a map onto the codec."""
    x = _vector(codec, norm_map)
    x_hat = decode_vector(codec, encode(codec, norm_map))
    return float(np.linalg.norm(x - x_hat) / np.linalg.norm(x))


def fit_pair(
    holdout: Sequence[NormMap], variance_target: float = 0.99
) -> Tuple[LatentCodec, LatentCodec]:
    """Per-component codecs for x and y."""
    return fit(holdout, variance_target, CodecComponent.X), fit(holdout, variance_target, CodecComponent.Y)
