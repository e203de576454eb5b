"""Affine parametric permeability ``kappa(x; mu) = sum_q theta_q(mu) kappa_q(x)``."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InadmissibleParameterError, SamplingError


def _mu_plus_mu_sq(m):
    return m + m * m


def _identity(m):
    return m


def _exp(m):
    return np.exp(m)


def _one(m):
    return 1.0


# id -> (theta function of one parameter component, admissible branch of that component)
THETA_FUNCTIONS = {
    "mu_plus_mu_sq": (_mu_plus_mu_sq, lambda m: m > 0.0),
    "identity": (_identity, lambda m: m > 0.0),
    "exp": (_exp, lambda m: True),
    "constant": (_one, lambda m: True),
}


@dataclass(frozen=True)
class ThetaTerm:
    theta_id: str
    component: int = 0

    def __post_init__(self):
        if self.theta_id not in THETA_FUNCTIONS:
            raise ConfigError(f"unknown theta id {self.theta_id!r}")
        if self.component < 0:
            raise ConfigError("theta component must be non-negative")


@dataclass(frozen=True)
class ParameterSample:
    mu: np.ndarray
    tag: str = "training"


class AffineCoefficient:
    """Q pairs of (theta descriptor, positive per-cell raster)."""

    def __init__(self, terms, rasters, M=None):
        if len(terms) != len(rasters) or not terms:
            raise ConfigError("need one raster per theta term and at least one term")
        rasters = [np.asarray(r, dtype=np.float64) for r in rasters]
        shape = rasters[0].shape
        for r in rasters:
            if r.shape != shape:
                raise ConfigError("all kappa_q rasters must share one shape")
            if not np.all(r > 0) or not np.all(np.isfinite(r)):
                raise ConfigError("kappa_q rasters must be finite and strictly positive")
        self.terms = tuple(terms)
        self.rasters = tuple(rasters)
        needed = max(t.component for t in self.terms) + 1
        self.M = needed if M is None else int(M)
        if self.M < needed:
            raise ConfigError(f"parameter dimension {self.M} too small for terms")

    @property
    def Q(self):
        return len(self.terms)

    @property
    def shape(self):
        return self.rasters[0].shape

    def as_mu(self, mu):
        mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
        if mu.shape != (self.M,):
            raise InadmissibleParameterError(f"expected mu of length {self.M}, got {mu.shape}")
        return mu

    def thetas(self, mu):
        mu = self.as_mu(mu)
        return np.array([theta_eval(self, q, mu) for q in range(self.Q)])

    def is_admissible(self, mu):
        mu = self.as_mu(mu)
        for t in self.terms:
            fn, branch = THETA_FUNCTIONS[t.theta_id]
            m = mu[t.component]
            if not branch(m) or not fn(m) > 0:
                return False
        return True


def theta_eval(coeff, q, mu):
    if not 0 <= q < coeff.Q:
        raise IndexError(f"term {q} out of range for Q={coeff.Q}")
    mu = coeff.as_mu(mu)
    term = coeff.terms[q]
    value = float(THETA_FUNCTIONS[term.theta_id][0](mu[term.component]))
    if not value > 0.0:
        raise InadmissibleParameterError(
            f"theta_{q}({mu[term.component]}) = {value} is not positive")
    return value


def eval_kappa(coeff, mu):
    th = coeff.thetas(mu)
    out = np.zeros(coeff.shape)
    for t, r in zip(th, coeff.rasters):
        out += t * r
    return out


def analytic_periodic_field(mesh):
    x, y = mesh.cell_centers
    return x * x * y + 1.0 / (3.0 + 2.8 * np.sin(15.0 * np.pi * (x - y)))


def synth_contrast_field(mesh, seed, tau=1e4, n_channels=8, n_inclusions=30,
                         channel_width=0.02, inclusion_size=0.03):
    """Background 1 with high-permeability channel segments and square inclusions set to ``tau``.

    Channels are axis-aligned bands of random position and random extent;
    inclusions are squares with random centers. Placement depends on ``seed`` only.
    """
    if tau < 1:
        raise ConfigError("contrast tau must be >= 1")
    field = np.ones(mesh.cell_shape)
    if tau == 1:
        return field
    rng = np.random.default_rng(seed)
    x, y = mesh.cell_centers
    for _ in range(n_channels):
        horizontal = rng.random() < 0.5
        pos = rng.uniform(0.05, 0.95)
        a, b = np.sort(rng.uniform(0.0, 1.0, size=2))
        across, along = (y, x) if horizontal else (x, y)
        field[(np.abs(across - pos) < channel_width / 2) & (along > a) & (along < b)] = tau
    for _ in range(n_inclusions):
        cx, cy = rng.uniform(0.03, 0.97, size=2)
        half = inclusion_size / 2
        field[(np.abs(x - cx) < half) & (np.abs(y - cy) < half)] = tau
    if field.max() == 1.0:
        # nothing landed on a cell center at this resolution
        field[mesh.ny // 2, :] = tau
    return field


def sample_training_set(M, n_s, seed, coeff=None, max_attempts=1000):
    """Standard-normal draws, each rejected and redrawn until admissible.

    Without ``coeff`` every component is taken to enter through
    ``mu + mu**2`` on its positive branch.
    """
    if coeff is None:
        terms = [ThetaTerm("mu_plus_mu_sq", m) for m in range(M)]
        coeff = AffineCoefficient(terms, [np.ones((1, 1))] * M, M=M)
    elif coeff.M != M:
        raise ConfigError(f"coefficient has M={coeff.M}, asked for M={M}")
    if n_s < 1:
        raise ConfigError("n_s must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_s):
        for _ in range(max_attempts):
            mu = rng.standard_normal(M)
            if coeff.is_admissible(mu):
                out.append(ParameterSample(mu, "training"))
                break
        else:
            raise SamplingError(f"no admissible sample after {max_attempts} draws")
    return out


def write_raster(path, values):
    values = np.asarray(values, dtype=np.float64)
    ny, nx = values.shape
    with open(path, "w") as fh:
        fh.write(f"{nx} {ny}\n")
        for row in values:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_raster(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ConfigError(f"{path}: bad raster header")
        nx, ny = int(header[0]), int(header[1])
        data = np.loadtxt(fh, dtype=np.float64, ndmin=2)
    if data.shape != (ny, nx):
        raise ConfigError(f"{path}: expected {ny}x{nx} values, got {data.shape}")
    return data


def constant_field(mesh, value=1.0):
    return np.full(mesh.cell_shape, float(value))


def load_field(entry, mesh, base_dir=Path(".")):
    """Resolve one coefficient-manifest entry to a raster."""
    if "raster_path" in entry:
        r = read_raster(Path(base_dir) / entry["raster_path"])
        if r.shape != mesh.cell_shape:
            raise ConfigError(f"raster {entry['raster_path']} does not match mesh")
        return r
    name = entry.get("builtin_field")
    if name == "periodic":
        return analytic_periodic_field(mesh)
    if name == "constant":
        return constant_field(mesh, entry.get("value", 1.0))
    if name == "contrast":
        return synth_contrast_field(mesh, entry.get("seed", 0), entry.get("tau", 1e4),
                                    **entry.get("options", {}))
    raise ConfigError(f"cannot resolve coefficient field {entry!r}")
