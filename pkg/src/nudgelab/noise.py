"""Q-Wiener increments, observation-noise coefficients, and their
Hilbert-Schmidt norms.

The covariance Q is diagonal in the model's spectral basis with
eigenvalues lambda_k^2, truncated at rank K_Q.  Increments are built
from standard normal draws in the H-orthonormalized mode directions, so
E <dW, e_k>_H <dW, e_j>_H = dt lambda_k^2 delta_jk holds in every model
regardless of its norm weights.  Vector models receive noise through
the solenoidal multiplier i k_perp/|k| (a per-mode isometry), keeping
increments divergence-free; the four-component model draws two
independent streams, velocity block first.

The draw block consumed per step has a fixed shape, so a whole-horizon
bulk draw slices into the same per-step increments as repeated calls;
this is what makes vectorized Monte Carlo bit-identical to the
single-path integrator.
"""

from dataclasses import dataclass, field

import numpy as np

from .fields import Field, norm_raw, spec_of_id
from .models import _sine_to_grid, _sine_from_grid


@dataclass(frozen=True)
class QSpec:
    """Diagonal trace-class covariance: Q e_k = lambda_k^2 e_k, rank K_Q."""
    model_id: str
    lam: np.ndarray = field(repr=False)
    rank: int = 0
    nstreams: int = 1
    trace: float = 0.0
    draw_shape: tuple = ()


def make_qspec(model, exponent="auto", k_q="auto", delta=None):
    """Spectrum lambda_k = (1+|k|^2)^(-s), truncated at K_Q.

    exponent "auto" picks s = 1.0 (1D) or 1.5 (2D); k_q "auto" ties the
    rank to the observation scale, K_Q = floor(pi/delta), or keeps the
    full band when no delta is given.
    """
    spec = model if not isinstance(model, str) else spec_of_id(model)
    if exponent == "auto":
        s = 1.0 if spec.kind == "sine" else 1.5
    else:
        s = float(exponent)
    kabs = spec.params["kabs"]
    if k_q == "auto":
        rank = int(np.floor(np.pi / delta)) if delta else int(np.max(kabs[spec.mask]))
    else:
        rank = int(k_q)
        if rank < 0:
            raise ValueError("k_q must be nonnegative")
    lam = np.where(spec.mask & (kabs <= rank), (1.0 + kabs ** 2) ** (-s), 0.0)
    nstreams = 1 if spec.ncomp <= 2 else spec.ncomp // 2
    trace = nstreams * float(np.sum(spec.mult * lam * lam))
    if spec.kind == "sine":
        draw_shape = (spec.n,)
    else:
        draw_shape = (nstreams, 2) + lam.shape
    return QSpec(spec.model_id, lam, rank, nstreams, trace, draw_shape)


def _scalar_stream(spec, q, block):
    # block shape (2, N, nx) of standard normals -> Hermitian unit draws
    tor = spec.aux
    z = (block[0] + 1j * block[1]) / np.sqrt(2.0)
    col = z[:, 0]
    z[:, 0] = (col + np.conj(np.roll(col[::-1], 1))) / np.sqrt(2.0)
    inv_wh = np.where(q.lam > 0.0, 1.0 / np.where(spec.w_h == 0.0, 1.0, spec.w_h), 0.0)
    out = q.lam * inv_wh * z
    return np.where(spec.mask, out, 0.0), tor


def increment_from_noise(q, dt, block):
    """The Q-Wiener increment determined by a raw standard-normal block."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    spec = spec_of_id(q.model_id)
    root = np.sqrt(dt)
    if spec.kind == "sine":
        inv_wh = np.where(q.lam > 0.0, 1.0 / spec.w_h, 0.0)
        return root * q.lam * inv_wh * block
    if spec.ncomp == 1:
        out, _ = _scalar_stream(spec, q, block[0])
        return root * out
    comps = []
    for s in range(q.nstreams):
        z, tor = _scalar_stream(spec, q, block[s])
        comps.extend([tor.rz1 * z, tor.rz2 * z])
    return root * np.stack(comps)


def sample_increment(rng, dt, q):
    """Draw one increment of W^Q over dt; deterministic given rng state."""
    block = rng.standard_normal(q.draw_shape)
    return Field(q.model_id, increment_from_noise(q, dt, block))


@dataclass(frozen=True)
class NoiseCoefficient:
    """Observation-noise coefficient G_delta(u).

    kinds: additive (sigma_delta * dW with sigma_delta = sigma*delta^p),
    state_scaled (sigma*||u||_H * dW), attractor_vanishing
    (sigma*||u-a||_H * dW), pointwise_multiplicative (sigma * u.dW by
    collocation, dealiased).  Linear in dW for every kind.
    """
    kind: str
    sigma: float
    p: float = 0.0
    delta: float = 1.0
    anchor: object = None  # Field for attractor_vanishing; None means 0

    @property
    def sigma_delta(self):
        return self.sigma * self.delta ** self.p


def make_noise_coefficient(kind, sigma, p=0.0, delta=1.0, anchor=None):
    if kind not in ("additive", "state_scaled", "pointwise_multiplicative",
                    "attractor_vanishing"):
        raise ValueError("unknown noise kind %r" % (kind,))
    if sigma < 0.0:
        raise ValueError("sigma must be nonnegative")
    if p not in (0.0, 0.5):
        raise ValueError("p must be 0 or 0.5")
    return NoiseCoefficient(kind, float(sigma), float(p), float(delta), anchor)


def _pointwise_product(spec, uc, wc):
    if spec.kind == "sine":
        m = 2 * spec.n
        vals = _sine_to_grid(uc, m) * _sine_to_grid(wc, m)
        return _sine_from_grid(vals, spec.n)
    tor = spec.aux
    if spec.ncomp == 1:
        out = tor.from_grid(tor.to_grid(uc) * tor.to_grid(wc))
    else:
        out = np.stack([tor.from_grid(tor.to_grid(a) * tor.to_grid(b))
                        for a, b in zip(uc, wc)])
    return spec.project_raw(out)


def _anchor_raw(coef, spec):
    if coef.anchor is None:
        return np.zeros(spec.shape, dtype=spec.dtype)
    return coef.anchor.coeffs if isinstance(coef.anchor, Field) else coef.anchor


def apply_G_raw(coef, spec, uc, dw):
    if coef.kind == "additive":
        return coef.sigma_delta * dw
    if coef.kind == "state_scaled":
        return (coef.sigma * norm_raw(spec, uc, "H")) * dw
    if coef.kind == "attractor_vanishing":
        diff = uc - _anchor_raw(coef, spec)
        return (coef.sigma * norm_raw(spec, diff, "H")) * dw
    return coef.sigma * _pointwise_product(spec, uc, dw)


def apply_G(coef, u, dw):
    """G_delta(u) applied to the noise direction dw; linear in dw."""
    spec = spec_of_id(u.model_id)
    if dw.model_id != u.model_id:
        raise ValueError("dw and u must share a model")
    return Field(u.model_id, apply_G_raw(coef, spec, u.coeffs, dw.coeffs))


def noise_directions(q):
    """The real H-orthonormal directions spanned by Q, with their lambdas.

    Yields (lam, raw array); used for dense assembly of G and for the
    Hilbert-Schmidt sum of the pointwise kind.
    """
    spec = spec_of_id(q.model_id)
    if spec.kind == "sine":
        for k in np.flatnonzero(q.lam > 0.0):
            c = np.zeros(spec.shape)
            c[k] = 1.0 / spec.w_h[k]
            yield float(q.lam[k]), c
        return
    tor = spec.aux
    half = np.sqrt(0.5)
    for iy, ix in np.argwhere(q.lam > 0.0):
        if ix == 0 and (iy == 0 or iy > tor.n // 2):
            continue  # conjugate mirror of an already-listed direction
        wh = spec.w_h[iy, ix]
        for val in (half / wh, 1j * half / wh):
            c = np.zeros((tor.n, tor.n // 2 + 1), dtype=complex)
            c[iy, ix] = val
            if ix == 0:
                c[(-iy) % tor.n, 0] = np.conj(val)
            lam = float(q.lam[iy, ix])
            if spec.ncomp == 1:
                yield lam, c
            else:
                vec = np.stack([tor.rz1 * c, tor.rz2 * c])
                if spec.ncomp == 2:
                    yield lam, vec
                else:
                    zero = np.zeros_like(vec)
                    yield lam, np.concatenate([vec, zero])
                    yield lam, np.concatenate([zero, vec])


def hs_norm_sq(coef, u, q):
    """||G_delta(u)||^2 in the Hilbert-Schmidt norm over Q^(1/2)H -> H."""
    spec = spec_of_id(q.model_id)
    uc = u.coeffs if isinstance(u, Field) else np.asarray(u)
    if coef.kind == "additive":
        return coef.sigma_delta ** 2 * q.trace
    if coef.kind == "state_scaled":
        return coef.sigma ** 2 * norm_raw(spec, uc, "H") ** 2 * q.trace
    if coef.kind == "attractor_vanishing":
        diff = uc - _anchor_raw(coef, spec)
        return coef.sigma ** 2 * norm_raw(spec, diff, "H") ** 2 * q.trace
    total = 0.0
    for lam, dirc in noise_directions(q):
        g = _pointwise_product(spec, uc, dirc)
        total += lam * lam * norm_raw(spec, g, "H") ** 2
    return coef.sigma ** 2 * total


def gamma_u_sup(series):
    """Running supremum of the Hilbert-Schmidt series along a trajectory."""
    arr = np.asarray(series, dtype=float)
    if arr.size == 0:
        raise ValueError("empty series")
    return float(np.max(arr))
