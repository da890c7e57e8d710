"""Volume-fraction gradation profiles for two-phase graded plates.

A 1D profile is a piecewise-linear ceramic volume fraction over ``n`` equal
segments: node 0 is pinned at 0 (pure metal), and successive nodal values
follow the bounded-ratio recursion

    phi[i+1] = min(1, a[i] * phi[i]),    a[i] ~ U[alpha_lower, alpha_up],

where ``alpha_up`` is itself drawn once per profile from [1, alpha_upper_max].
The first nodal value is drawn from one of several buckets (chosen with equal
probability) so that very small starting fractions are as likely as moderate
ones.  If the last node ends below 1, nodes 1..n are rescaled by 1/phi[n].
With alpha_lower = 1 every generated profile is monotone non-decreasing.

2D fields are tensor products of two independent 1D profiles and are
evaluated anywhere in the plate by bilinear interpolation on the node grid.

Power-law profiles (x/L)**m are a strict subset of this design space: the
exact successive ratios are ((i+1)/i)**m, and their first-order (binomial)
approximation is 1 + m/i.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GeneOutOfBounds, OutOfDomain, PhiOutOfRange
from .rng import make_rng

_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class BucketSpec:
    """Disjoint-or-not closed intervals inside (0, 1] for the first nodal value."""

    buckets: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.buckets) == 0:
            raise ValueError("need at least one bucket")
        for lo, hi in self.buckets:
            if not (0.0 < lo <= hi <= 1.0):
                raise ValueError(f"bucket [{lo}, {hi}] not inside (0, 1]")

    @property
    def hull(self) -> tuple[float, float]:
        """Smallest interval containing every bucket (used as the gene bound)."""
        return (min(lo for lo, _ in self.buckets), max(hi for _, hi in self.buckets))


@dataclass(frozen=True)
class GenerationConfig:
    """Parameters of the 1D profile generator for one axis.

    ``n_elems`` segments (profile has n_elems+1 nodes), per-step ratio drawn
    from [alpha_lower, alpha_up] with alpha_up ~ U[1, alpha_upper_max].
    """

    n_elems: int
    first_node_buckets: BucketSpec
    alpha_lower: float = 1.0
    alpha_upper_max: float = 3.0
    normalize_to_one: bool = True

    def __post_init__(self):
        if self.n_elems < 1:
            raise ValueError("n_elems must be >= 1")
        if self.alpha_lower <= 0.0:
            raise ValueError("alpha_lower must be > 0")
        if self.alpha_upper_max <= 1.0:
            raise ValueError("alpha_upper_max must be > 1")
        if self.alpha_lower > self.alpha_upper_max:
            raise ValueError("alpha_lower must not exceed alpha_upper_max")


def _validated_values(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("profile needs a 1D vector of at least 2 nodal values")
    if values[0] != 0.0:
        raise PhiOutOfRange("node 0 must be exactly 0")
    if values.min() < -_BOUND_TOL or values.max() > 1.0 + _BOUND_TOL:
        raise PhiOutOfRange("nodal volume fractions must lie in [0, 1]")
    return np.clip(values, 0.0, 1.0)


@dataclass(frozen=True)
class Profile1D:
    """Nodal ceramic volume fractions at n+1 equispaced nodes; node 0 is 0."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _validated_values(self.values))
        self.values.setflags(write=False)

    @property
    def n_elems(self) -> int:
        return self.values.size - 1

    def to_dict(self) -> dict:
        return {"n": self.n_elems, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Profile1D":
        values = np.asarray(d["values"], dtype=float)
        if values.size != d["n"] + 1:
            raise ValueError("inconsistent node count in serialized profile")
        return cls(values)


@dataclass(frozen=True)
class Profile2D:
    """Ceramic volume fraction on an (nx+1) x (ny+1) node grid over [0,L]x[0,H].

    ``grid[i, j]`` is the value at (x_i, y_j).  Between nodes the field is
    bilinear.
    """

    grid: np.ndarray
    L: float = 1.0
    H: float = 1.0

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 2 or grid.shape[0] < 2 or grid.shape[1] < 2:
            raise ValueError("grid must be at least 2x2")
        if grid.min() < -_BOUND_TOL or grid.max() > 1.0 + _BOUND_TOL:
            raise PhiOutOfRange("grid volume fractions must lie in [0, 1]")
        if self.L <= 0.0 or self.H <= 0.0:
            raise ValueError("domain lengths must be positive")
        object.__setattr__(self, "grid", np.clip(grid, 0.0, 1.0))
        self.grid.setflags(write=False)

    @property
    def nx(self) -> int:
        return self.grid.shape[0] - 1

    @property
    def ny(self) -> int:
        return self.grid.shape[1] - 1

    def to_dict(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "L": self.L,
            "H": self.H,
            "grid": self.grid.ravel(order="C").tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Profile2D":
        grid = np.asarray(d["grid"], dtype=float).reshape(d["nx"] + 1, d["ny"] + 1)
        return cls(grid, L=d["L"], H=d["H"])


@dataclass(frozen=True)
class GradationGenes:
    """Design variables of one 2D profile: first-node fractions and ratio vectors.

    Bounds are stored per gene in flatten order
    [phi_x1, phi_y1, alphas_x..., alphas_y...].
    """

    phi_x1: float
    phi_y1: float
    alphas_x: np.ndarray
    alphas_y: np.ndarray
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("alphas_x", "alphas_y", "lower", "upper"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            arr.setflags(write=False)
        n = 2 + self.alphas_x.size + self.alphas_y.size
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds length must equal the gene count")

    def flatten(self) -> np.ndarray:
        return np.concatenate(([self.phi_x1, self.phi_y1], self.alphas_x, self.alphas_y))

    def validate(self):
        vec = self.flatten()
        if np.any(vec < self.lower - _BOUND_TOL) or np.any(vec > self.upper + _BOUND_TOL):
            bad = np.where((vec < self.lower - _BOUND_TOL) | (vec > self.upper + _BOUND_TOL))[0]
            raise GeneOutOfBounds(f"genes {bad.tolist()} outside declared bounds")

    def replace_vector(self, vec: np.ndarray) -> "GradationGenes":
        """Same structure and bounds, new gene values."""
        nx = self.alphas_x.size
        return GradationGenes(
            phi_x1=float(vec[0]),
            phi_y1=float(vec[1]),
            alphas_x=vec[2 : 2 + nx].copy(),
            alphas_y=vec[2 + nx :].copy(),
            lower=self.lower,
            upper=self.upper,
        )

    def to_dict(self) -> dict:
        return {
            "phi_x1": self.phi_x1,
            "phi_y1": self.phi_y1,
            "alphas_x": self.alphas_x.tolist(),
            "alphas_y": self.alphas_y.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def gene_bounds(config_x: GenerationConfig, config_y: GenerationConfig):
    """Per-gene [lo, hi] in flatten order.

    First-node genes are bounded by the convex hull of their buckets; ratio
    genes by [alpha_lower, alpha_upper_max] (the full per-profile ratio range).
    """
    hx = config_x.first_node_buckets.hull
    hy = config_y.first_node_buckets.hull
    nax, nay = config_x.n_elems - 1, config_y.n_elems - 1
    lower = np.concatenate(
        ([hx[0], hy[0]], np.full(nax, config_x.alpha_lower), np.full(nay, config_y.alpha_lower))
    )
    upper = np.concatenate(
        ([hx[1], hy[1]], np.full(nax, config_x.alpha_upper_max), np.full(nay, config_y.alpha_upper_max))
    )
    return lower, upper


def genes_from_dict(d: dict, config_x: GenerationConfig, config_y: GenerationConfig) -> GradationGenes:
    lower, upper = gene_bounds(config_x, config_y)
    return GradationGenes(
        phi_x1=float(d["phi_x1"]),
        phi_y1=float(d["phi_y1"]),
        alphas_x=np.asarray(d["alphas_x"], dtype=float),
        alphas_y=np.asarray(d["alphas_y"], dtype=float),
        lower=lower,
        upper=upper,
    )


def _draw_axis(rng: np.random.Generator, config: GenerationConfig):
    """One axis worth of genes: (phi1, alphas). Draw order is part of the contract."""
    alpha_up = rng.uniform(1.0, config.alpha_upper_max)
    buckets = config.first_node_buckets.buckets
    lo, hi = buckets[rng.integers(len(buckets))]
    phi1 = rng.uniform(lo, hi)
    alphas = rng.uniform(config.alpha_lower, alpha_up, size=config.n_elems - 1)
    return phi1, alphas


def _replay(phi1: float, alphas: np.ndarray, normalize_to_one: bool) -> Profile1D:
    """Run the bounded-ratio recursion from fixed ratios; deterministic."""
    n = alphas.size + 1
    values = np.zeros(n + 1)
    values[1] = phi1
    for i in range(1, n):
        values[i + 1] = min(1.0, alphas[i - 1] * values[i])
    if normalize_to_one and values[n] < 1.0:
        values[1:] /= values[n]
    return Profile1D(values)


def generate_profile_1d(rng, config: GenerationConfig) -> Profile1D:
    """Draw one random 1D profile (see module docstring for the scheme)."""
    phi1, alphas = _draw_axis(make_rng(rng), config)
    return _replay(phi1, alphas, config.normalize_to_one)


def generate_genes(rng, config_x: GenerationConfig, config_y: GenerationConfig) -> GradationGenes:
    """Draw the genes of one 2D profile (x axis first, then y axis)."""
    rng = make_rng(rng)
    phi_x1, alphas_x = _draw_axis(rng, config_x)
    phi_y1, alphas_y = _draw_axis(rng, config_y)
    lower, upper = gene_bounds(config_x, config_y)
    return GradationGenes(phi_x1, phi_y1, alphas_x, alphas_y, lower, upper)


def genes_to_profiles(genes: GradationGenes, normalize_to_one: bool = True):
    """Deterministically decode genes into the pair of 1D axis profiles.

    Identical genes always give bit-identical profiles; raises
    GeneOutOfBounds if any gene is outside its declared interval.
    """
    genes.validate()
    px = _replay(genes.phi_x1, genes.alphas_x, normalize_to_one)
    py = _replay(genes.phi_y1, genes.alphas_y, normalize_to_one)
    return px, py


def tensor_product(px: Profile1D, py: Profile1D, L: float = 1.0, H: float = 1.0) -> Profile2D:
    """2D field as the outer product of the two axis profiles."""
    return Profile2D(np.outer(px.values, py.values), L=L, H=H)


def bilinear_shape(xi, eta):
    """The four cell shape functions at parametric (xi, eta) in [-1,1]^2.

    Corner order: (-1,-1), (1,-1), (1,1), (-1,1).  They sum to 1 everywhere.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return np.stack(
        [
            (1 - xi) * (1 - eta) / 4,
            (1 + xi) * (1 - eta) / 4,
            (1 + xi) * (1 + eta) / 4,
            (1 - xi) * (1 + eta) / 4,
        ],
        axis=-1,
    )


def interpolate(p: Profile2D, x, y):
    """Bilinear interpolation of the node grid at (x, y) inside the plate.

    Accepts scalars or equally-shaped arrays; raises OutOfDomain for points
    outside [0,L] x [0,H].
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    scalar = x.ndim == 0 and y.ndim == 0
    x, y = np.atleast_1d(x), np.atleast_1d(y)
    tol_x, tol_y = 1e-12 * p.L, 1e-12 * p.H
    if np.any(x < -tol_x) or np.any(x > p.L + tol_x) or np.any(y < -tol_y) or np.any(y > p.H + tol_y):
        raise OutOfDomain("query point outside the plate domain")
    hx, hy = p.L / p.nx, p.H / p.ny
    ix = np.clip((x / hx).astype(int), 0, p.nx - 1)
    iy = np.clip((y / hy).astype(int), 0, p.ny - 1)
    xi = 2.0 * (x - ix * hx) / hx - 1.0
    eta = 2.0 * (y - iy * hy) / hy - 1.0
    corners = np.stack(
        [p.grid[ix, iy], p.grid[ix + 1, iy], p.grid[ix + 1, iy + 1], p.grid[ix, iy + 1]],
        axis=-1,
    )
    out = np.einsum("...c,...c->...", bilinear_shape(xi, eta), corners)
    return float(out[0]) if scalar else out


def power_law_profile(n_elems: int, m: float) -> Profile1D:
    """Nodal values of (x/L)**m; node 0 is pinned at 0 (convention for m = 0)."""
    if m < 0.0:
        raise ValueError("power-law index must be >= 0")
    i = np.arange(n_elems + 1, dtype=float)
    values = (i / n_elems) ** m
    values[0] = 0.0
    return Profile1D(values)


def power_law_alphas(n_elems: int, m: float, kind: str = "first_order") -> np.ndarray:
    """Successive-ratio vector that replays the power-law profile.

    ``exact`` ratios ((i+1)/i)**m reproduce the power law to roundoff;
    ``first_order`` ratios 1 + m/i are the binomial approximation and rely on
    the final normalization to land back near the power law.
    """
    if n_elems < 2:
        raise ValueError("need at least 2 segments for a ratio vector")
    if m < 0.0:
        raise ValueError("power-law index must be >= 0")
    i = np.arange(1, n_elems, dtype=float)
    if kind == "exact":
        return ((i + 1.0) / i) ** m
    if kind == "first_order":
        return 1.0 + m / i
    raise ValueError(f"unknown ratio kind {kind!r}")


def power_law_replay(n_elems: int, m: float, kind: str = "exact") -> Profile1D:
    """Replay the recursion from phi1 = (1/n)**m with power-law ratios."""
    phi1 = (1.0 / n_elems) ** m
    return _replay(phi1, power_law_alphas(n_elems, m, kind=kind), normalize_to_one=True)


def average_ceramic_fraction(p: Profile2D) -> float:
    """Domain average of the bilinear field (exact for piecewise bilinear).

    Equals per-cell Gauss quadrature of the interpolant; reduces to tensor
    trapezoid weights on the node grid.
    """
    wx = np.ones(p.nx + 1)
    wx[0] = wx[-1] = 0.5
    wy = np.ones(p.ny + 1)
    wy[0] = wy[-1] = 0.5
    return float(wx @ p.grid @ wy / (p.nx * p.ny))


def axis_profile_2d(p: Profile1D, axis: str, L: float = 1.0, H: float = 1.0, n_other: int | None = None) -> Profile2D:
    """2D field that varies along one axis only (uniform along the other).

    Used for reference gradations such as a pure through-height power law;
    note the uniform direction is constant 1, not a generated profile.
    """
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    n_other = p.n_elems if n_other is None else n_other
    ones = np.ones(n_other + 1)
    if axis == "x":
        return Profile2D(np.outer(p.values, ones), L=L, H=H)
    return Profile2D(np.outer(ones, p.values), L=L, H=H)
