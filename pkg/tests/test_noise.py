"""Q-Wiener increments, noise coefficients, Hilbert-Schmidt norms."""

import numpy as np
import pytest

from nudgelab.fields import Field, norm
from nudgelab.models import build_model, random_field
from nudgelab.noise import (apply_G, gamma_u_sup, hs_norm_sq,
                            make_noise_coefficient, make_qspec,
                            noise_directions, sample_increment)


def test_spectrum_and_rank_defaults():
    spec = build_model("ac_weak", 32)
    q = make_qspec(spec, delta=0.39)
    k = np.arange(1.0, 33.0)
    lam = (1.0 + k ** 2) ** -1.0
    lam[8:] = 0.0                      # rank follows the observation cutoff
    assert np.allclose(q.lam, lam)
    assert q.rank == 8


def test_trace_formula(all_models):
    for spec in all_models:
        q = make_qspec(spec)
        lam2 = q.lam ** 2
        if spec.kind == "sine":
            want = np.sum(lam2)
        else:
            want = q.nstreams * np.sum(spec.mult[spec.mask] * lam2[spec.mask])
        assert q.trace == pytest.approx(want, rel=1e-12), spec.model_id


def test_increment_mean_square_matches_spectrum():
    # E <dW, e_k>_H^2 = lam_k^2 dt on H-normalized directions
    spec = build_model("ac_weak", 16)
    q = make_qspec(spec)
    rng = np.random.default_rng(0)
    dt = 0.01
    n_draw = 4000
    acc = np.zeros(16)
    for _ in range(n_draw):
        dw = sample_increment(rng, dt, q)
        acc += (spec.w_h * dw.coeffs) ** 2
    acc /= n_draw * dt
    se = q.lam ** 2 * np.sqrt(2.0 / n_draw)
    assert np.all(np.abs(acc - q.lam ** 2) < 4.0 * se + 1e-12)


def test_increment_trace_identity():
    spec = build_model("nse_weak", 16)
    q = make_qspec(spec)
    rng = np.random.default_rng(1)
    dt = 0.05
    n_draw = 2000
    tot = 0.0
    for _ in range(n_draw):
        dw = sample_increment(rng, dt, q)
        tot += norm(dw, "H") ** 2
    tot /= n_draw * dt
    assert tot == pytest.approx(q.trace, rel=0.1)


def test_bulk_draws_slice_to_per_step_draws():
    # one whole-horizon draw equals the per-step sequence, bit for bit
    spec = build_model("ac_weak", 16)
    q = make_qspec(spec)
    ss = np.random.SeedSequence(5)
    r1 = np.random.Generator(np.random.Philox(ss))
    r2 = np.random.Generator(np.random.Philox(ss))
    bulk = r1.standard_normal((7,) + q.draw_shape)
    for i in range(7):
        step = r2.standard_normal(q.draw_shape)
        assert np.array_equal(bulk[i], step)


def test_noise_directions_are_h_orthonormal(all_models):
    for spec in all_models:
        q = make_qspec(spec)
        dirs = list(noise_directions(q))
        assert len(dirs) > 0
        for lam, raw in dirs[:6]:
            f = Field(spec.model_id, raw)
            assert norm(f, "H") == pytest.approx(1.0, rel=1e-10), spec.model_id


def test_hs_norm_closed_forms_match_assembly(all_models):
    for spec in all_models:
        q = make_qspec(spec)
        u = random_field(spec, 4)
        anchor = random_field(spec, 5)
        coefs = [make_noise_coefficient("additive", 0.3, p=0.5, delta=0.5),
                 make_noise_coefficient("state_scaled", 0.2),
                 make_noise_coefficient("attractor_vanishing", 0.2,
                                        anchor=anchor)]
        if spec.kind == "sine":
            coefs.append(make_noise_coefficient("pointwise_multiplicative", 0.2))
        for coef in coefs:
            want = 0.0
            for lam, raw in noise_directions(q):
                img = apply_G(coef, u, Field(spec.model_id, raw))
                want += lam ** 2 * norm(img, "H") ** 2
            got = hs_norm_sq(coef, u, q)
            assert got == pytest.approx(want, rel=1e-10), (spec.model_id,
                                                           coef.kind)


def test_pointwise_hs_on_torus_matches_assembly():
    spec = build_model("qg", 8)
    q = make_qspec(spec)
    u = random_field(spec, 9)
    coef = make_noise_coefficient("pointwise_multiplicative", 0.3)
    want = sum(lam ** 2 * norm(apply_G(coef, u, Field(spec.model_id, raw)), "H") ** 2
               for lam, raw in noise_directions(q))
    assert hs_norm_sq(coef, u, q) == pytest.approx(want, rel=1e-10)


def test_sigma_delta_applies_to_additive_only():
    add = make_noise_coefficient("additive", 0.4, p=0.5, delta=0.25)
    assert add.sigma_delta == pytest.approx(0.4 * 0.25 ** 0.5)
    plain = make_noise_coefficient("additive", 0.4, p=0.0, delta=0.25)
    assert plain.sigma_delta == 0.4


def test_state_scaled_vanishes_at_zero():
    spec = build_model("ac_weak", 16)
    q = make_qspec(spec)
    coef = make_noise_coefficient("state_scaled", 0.7)
    zero = Field(spec.model_id, np.zeros(16))
    rng = np.random.default_rng(2)
    dw = sample_increment(rng, 0.01, q)
    assert norm(apply_G(coef, zero, dw), "H") == 0.0
    assert hs_norm_sq(coef, zero, q) == 0.0


def test_attractor_vanishing_at_anchor():
    spec = build_model("ac_weak", 16)
    q = make_qspec(spec)
    a = random_field(spec, 6)
    coef = make_noise_coefficient("attractor_vanishing", 0.7, anchor=a)
    assert hs_norm_sq(coef, a, q) == 0.0


def test_pointwise_matches_matrix_collocation_oracle():
    # same collocation semantics, direct sine matrices instead of ffts
    spec = build_model("ac_weak", 8)
    u = random_field(spec, 20)
    w = random_field(spec, 21)
    coef = make_noise_coefficient("pointwise_multiplicative", 1.0)
    got = apply_G(coef, u, w).coeffs
    n = 8
    m = 2 * n
    x = np.arange(1, m + 1) / (m + 1.0)
    k = np.arange(1, m + 1)
    syn = np.sqrt(2.0) * np.sin(np.pi * np.outer(x, k))
    pad = np.concatenate([u.coeffs, np.zeros(m - n)])
    pad_w = np.concatenate([w.coeffs, np.zeros(m - n)])
    prod = (syn @ pad) * (syn @ pad_w)
    want = (syn.T @ prod)[:n] / (m + 1.0)
    assert np.max(np.abs(got - want)) < 1e-12


def test_pointwise_hs_dense_frobenius_oracle():
    # brute-force G matrix over all noise directions, Frobenius-summed
    spec = build_model("ac_weak", 8)
    q = make_qspec(spec)
    u = random_field(spec, 22)
    coef = make_noise_coefficient("pointwise_multiplicative", 0.6)
    want = sum(lam ** 2 * norm(apply_G(coef, u, Field(spec.model_id, raw)),
                               "H") ** 2
               for lam, raw in noise_directions(q))
    assert hs_norm_sq(coef, u, q) == pytest.approx(want, rel=1e-12)


def test_state_scaled_hs_homogeneity():
    # ||u||_H = 2 and sigma = 1 gives exactly 4 sum lam^2
    spec = build_model("ac_weak", 16)
    q = make_qspec(spec)
    u = random_field(spec, 23, h_norm=2.0)
    coef = make_noise_coefficient("state_scaled", 1.0)
    assert hs_norm_sq(coef, u, q) == pytest.approx(4.0 * np.sum(q.lam ** 2),
                                                   rel=1e-12)


def test_attractor_vanishing_peaks_at_start_on_decay():
    from nudgelab.integrate import StepConfig, step_reference
    spec = build_model("ac_strong", 16)
    q = make_qspec(spec)
    coef = make_noise_coefficient("attractor_vanishing", 0.5)
    u = random_field(spec, 24, h_norm=0.5)      # decays monotonically
    dt = 1e-2
    series = [hs_norm_sq(coef, u, q)]
    for _ in range(50):
        u = step_reference(u, dt)
        series.append(hs_norm_sq(coef, u, q))
    series = np.array(series)
    assert np.argmax(series) == 0
    assert np.all(np.diff(series) <= 1e-14)


def test_gamma_u_sup():
    assert gamma_u_sup(np.array([0.1, 3.0, 2.0])) == 3.0
    with pytest.raises(ValueError):
        gamma_u_sup(np.array([]))


def test_noise_coefficient_validation():
    with pytest.raises(ValueError):
        make_noise_coefficient("loud", 0.1)
    with pytest.raises(ValueError):
        make_noise_coefficient("additive", -0.1)
    with pytest.raises(ValueError):
        make_noise_coefficient("additive", 0.1, p=0.3)
