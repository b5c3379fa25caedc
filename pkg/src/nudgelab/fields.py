"""Spectral states and diagonal norms for the triple V in H in V*.

Every model keeps its state as spectral coefficients with per-mode norm
weights for the three spaces.  Norms are weighted l2 sums,

    ||f||_X^2 = sum_k mult(k) w_X(k)^2 |f_k|^2,

the duality pairing extends the H inner product with weights w_H^2, and
the weights satisfy the interpolation identity w_V * w_Vstar = w_H^2 on
every retained mode.  The linear operator A acts mode-wise through
a(k) > 0; coercivity <Af, f> >= alpha ||f||_V^2 then holds with
alpha = min_k a(k) w_H(k)^2 / w_V(k)^2.

Fields are immutable values: coefficient arrays are copied on
construction and marked read-only, so they are safe to share between
concurrent workers.
"""

import numpy as np

_REGISTRY = {}


class ModelSpec:
    """A Gelfand-triple instantiation with diagonal spectral data.

    Parameters are arrays in the model's coefficient layout: ``a`` is the
    spectral action of A, ``w_h``/``w_v``/``w_vstar`` the norm weights,
    ``mask`` the retained (dealiased) band and ``mult`` the conjugate-pair
    multiplicity used when summing over stored modes.  ``f_raw`` evaluates
    the nonlinearity on a raw coefficient array, ``kappa_raw`` the model's
    kappa monitor, ``project_raw`` re-imposes the model's constraints
    (dealias band, zero mean, divergence-free and reality closures).
    """

    def __init__(self, model_id, kind, n, nu, ncomp, shape, dtype,
                 a, w_h, w_v, w_vstar, mask, mult,
                 f_raw, kappa_raw, project_raw, params=None):
        self.model_id = model_id
        self.kind = kind
        self.n = n
        self.nu = nu
        self.ncomp = ncomp
        self.shape = shape
        self.dtype = dtype
        self.a = a
        self.w_h = w_h
        self.w_v = w_v
        self.w_vstar = w_vstar
        self.mask = mask
        self.mult = mult
        self.f_raw = f_raw
        self.kappa_raw = kappa_raw
        self.project_raw = project_raw
        self.params = dict(params or {})

        wprod = (w_v * w_vstar)[mask]
        wh2 = (w_h * w_h)[mask]
        if not np.allclose(wprod, wh2, rtol=1e-12, atol=0.0):
            raise ValueError("norm weights must satisfy w_V*w_Vstar = w_H^2")
        if not np.all(a[mask] > 0.0):
            raise ValueError("a(k) must be positive on every retained mode")
        quot = a[mask] * wh2 / (w_v[mask] ** 2)
        self.alpha = float(quot.min())
        # embedding constants ||f||_V* <= c_emb ||f||_H <= c_emb2 ||f||_V
        self.c_emb = float((w_vstar[mask] / w_h[mask]).max())
        self.c_emb2 = float((w_h[mask] / w_v[mask]).max())

    def weights(self, space):
        try:
            return {"H": self.w_h, "V": self.w_v, "Vstar": self.w_vstar}[space]
        except KeyError:
            raise ValueError("unknown space %r, expected H, V or Vstar" % (space,))

    def v_beta_weights(self, beta):
        """Weights of the interpolation space [V*, V]_beta (diagonal)."""
        w = self.w_vstar ** (1.0 - beta) * self.w_v ** beta
        return np.where(self.mask, w, 0.0)

    @property
    def dof(self):
        return int(np.prod(self.shape))

    def __repr__(self):
        return "ModelSpec(%s)" % self.model_id


def register_model(spec):
    """Register a ModelSpec under its model_id; first registration wins."""
    return _REGISTRY.setdefault(spec.model_id, spec)


def spec_of_id(model_id):
    try:
        return _REGISTRY[model_id]
    except KeyError:
        raise KeyError("unknown model_id %r" % (model_id,))


class Field:
    """Immutable spectral coefficient vector tagged by its model."""

    __slots__ = ("model_id", "coeffs", "basis_size")

    def __init__(self, model_id, coeffs):
        spec = spec_of_id(model_id)
        arr = np.array(coeffs, dtype=spec.dtype, copy=True)
        if arr.shape != spec.shape:
            raise ValueError("coefficient shape %s does not match model %s (%s)"
                             % (arr.shape, model_id, spec.shape))
        arr.setflags(write=False)
        object.__setattr__(self, "model_id", model_id)
        object.__setattr__(self, "coeffs", arr)
        object.__setattr__(self, "basis_size", spec.n)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    @property
    def spec(self):
        return spec_of_id(self.model_id)

    def __repr__(self):
        return "Field(%s)" % self.model_id


def _check_pair(f, g):
    if f.model_id != g.model_id:
        raise ValueError("model mismatch: %s vs %s" % (f.model_id, g.model_id))
    return spec_of_id(f.model_id)


def _wsum2(spec, a, w):
    # sum of mult * w^2 * |a_k|^2 over stored modes (and components)
    if np.iscomplexobj(a):
        mag = (a.real * a.real + a.imag * a.imag)
    else:
        mag = a * a
    return float(np.sum(spec.mult * (w * w) * mag))


def norm(f, space):
    """Weighted l2 norm of a Field in H, V or Vstar."""
    spec = spec_of_id(f.model_id)
    return float(np.sqrt(_wsum2(spec, f.coeffs, spec.weights(space))))


def norm_raw(spec, arr, space):
    return float(np.sqrt(_wsum2(spec, arr, spec.weights(space))))


def inner_h(f, g):
    """H inner product; symmetric, inner_h(f, f) = norm(f, 'H')**2."""
    spec = _check_pair(f, g)
    return inner_h_raw(spec, f.coeffs, g.coeffs)


def inner_h_raw(spec, a, b):
    w2 = spec.w_h * spec.w_h
    if np.iscomplexobj(a):
        prod = (a * np.conj(b)).real
    else:
        prod = a * b
    return float(np.sum(spec.mult * w2 * prod))


def pairing(f, g):
    """Duality pairing <f, g> between V* and V.

    Realized with the H weights, so it coincides with inner_h whenever f
    lies in H; for strong triples this is the declared (f, A g)-type
    pairing expressed in coefficients.
    """
    spec = _check_pair(f, g)
    return inner_h_raw(spec, f.coeffs, g.coeffs)


def apply_A(f):
    """Apply the model's linear operator mode-wise; V*-valued result."""
    spec = spec_of_id(f.model_id)
    return Field(f.model_id, spec.project_raw(spec.a * f.coeffs))


def apply_F(f):
    """Evaluate the model's nonlinearity; V*-valued result."""
    spec = spec_of_id(f.model_id)
    return Field(f.model_id, spec.f_raw(f.coeffs))


def zero_field(model):
    spec = model if isinstance(model, ModelSpec) else spec_of_id(model)
    return Field(spec.model_id, np.zeros(spec.shape, dtype=spec.dtype))
