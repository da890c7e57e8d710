"""2D thermoelastic finite elements on structured 9-node quadrilateral meshes.

One-way coupled analysis of a rectangular two-phase graded plate: a linear
steady heat-conduction solve (Dirichlet / flux / convection / adiabatic edge
conditions) followed by a linear elastic solve with the temperature field
entering as an initial-stress load.  Point properties come from the rule of
mixtures evaluated at the 3x3 Gauss points of every element, sampling the
bilinear volume-fraction field independently of the biquadratic displacement
and temperature interpolation.

Conventions
-----------
* temperatures are changes relative to the stress-free reference state;
* the volume fraction ``phi`` is the ceramic fraction, metal is ``1 - phi``;
* engineering shear strain, stress vector (s_xx, s_yy, t_xy);
* plane strain uses the 3D Lame constants and beta = E*alpha/(1-2nu);
  plane stress uses lambda* = 2*lambda*mu/(lambda+2mu) and
  beta = E*alpha/(1-nu);
* effective stress is the von Mises invariant of the deviatoric stress;
  the default source is the in-plane physical stress with sigma_zz taken
  as zero ("inplane", which reproduces the published reference values in
  both modes); "physical3d" adds the mode-consistent out-of-plane
  component, and "isothermal_2d" evaluates the isothermal tensor sigma_m
  instead of the physical one.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    MissingSummary,
    NonPositiveConductivity,
    OutOfDomain,
    PhiOutOfRange,
    SingularSystem,
)
from .profiles import Profile2D

EDGES = ("left", "right", "bottom", "top")
CORNERS = {
    "bottom_left": (0.0, 0.0),
    "bottom_right": (1.0, 0.0),
    "top_left": (0.0, 1.0),
    "top_right": (1.0, 1.0),
}
RESIDUAL_TOL = 1e-10


# ---------------------------------------------------------------------------
# materials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseProperties:
    """Isotropic phase: Young's modulus [Pa], Poisson ratio, thermal expansion
    [1/K], conductivity [W/m/K], density [kg/m^3]."""

    E: float
    nu: float
    alpha: float
    k: float
    rho: float

    def __post_init__(self):
        if self.E <= 0 or not (0.0 <= self.nu < 0.5) or self.k <= 0 or self.rho <= 0:
            raise ValueError("phase properties out of physical range")


@dataclass(frozen=True)
class MaterialPair:
    metal: PhaseProperties
    ceramic: PhaseProperties
    name: str = ""

    def to_dict(self) -> dict:
        return {
            "metal": vars(self.metal).copy(),
            "ceramic": vars(self.ceramic).copy(),
            "name": self.name,
        }


MATERIALS = {
    "Ni/Al2O3": MaterialPair(
        metal=PhaseProperties(E=199.5e9, nu=0.3, alpha=15.4e-6, k=60.7, rho=8880.0),
        ceramic=PhaseProperties(E=393.0e9, nu=0.3, alpha=7.4e-6, k=30.0, rho=3960.0),
        name="Ni/Al2O3",
    ),
    "Al/ZrO2": MaterialPair(
        metal=PhaseProperties(E=70.0e9, nu=0.3, alpha=23.4e-6, k=233.0, rho=2707.0),
        ceramic=PhaseProperties(E=200.0e9, nu=0.3, alpha=10.0e-6, k=2.2, rho=5700.0),
        name="Al/ZrO2",
    ),
    # the aluminum/zirconia data of the classic benchmark this plate problem
    # descends from; the published reference stresses were computed with it
    "Al/ZrO2-legacy": MaterialPair(
        metal=PhaseProperties(E=70.0e9, nu=0.3, alpha=23.4e-6, k=204.0, rho=2707.0),
        ceramic=PhaseProperties(E=151.0e9, nu=0.3, alpha=10.0e-6, k=2.09, rho=5700.0),
        name="Al/ZrO2-legacy",
    ),
}


def material_at(pair: MaterialPair, phi_metal):
    """Rule-of-mixtures blend P = P_m*phi_m + P_c*(1 - phi_m) at given metal fraction.

    Accepts scalars or arrays; returns a dict of blended E, nu, alpha, k, rho.
    """
    phi_metal = np.asarray(phi_metal, dtype=float)
    if np.any(phi_metal < -1e-12) or np.any(phi_metal > 1.0 + 1e-12):
        raise PhiOutOfRange("metal volume fraction must lie in [0, 1]")
    phi_metal = np.clip(phi_metal, 0.0, 1.0)
    m, c = pair.metal, pair.ceramic
    out = {
        "E": m.E * phi_metal + c.E * (1.0 - phi_metal),
        "nu": m.nu * phi_metal + c.nu * (1.0 - phi_metal),
        "alpha": m.alpha * phi_metal + c.alpha * (1.0 - phi_metal),
        "k": m.k * phi_metal + c.k * (1.0 - phi_metal),
        "rho": m.rho * phi_metal + c.rho * (1.0 - phi_metal),
    }
    if np.any(out["k"] <= 0.0):
        raise NonPositiveConductivity("blended conductivity must be positive")
    return out


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dirichlet:
    """Prescribed temperature on an edge; value is a number or f(x, y)."""

    value: object = 0.0


@dataclass(frozen=True)
class Flux:
    """Prescribed inward heat flux q [W/m^2] on an edge."""

    q: float = 0.0


@dataclass(frozen=True)
class Convection:
    """Convective exchange q_out = h (theta - theta_inf) on an edge."""

    h: float
    t_inf: float = 0.0


@dataclass(frozen=True)
class Adiabatic:
    pass


@dataclass(frozen=True)
class ThermalBCSet:
    """Exactly one condition per edge (left/right/bottom/top)."""

    left: object = Adiabatic()
    right: object = Adiabatic()
    bottom: object = Adiabatic()
    top: object = Adiabatic()

    def on(self, edge: str):
        return getattr(self, edge)

    def is_well_posed(self) -> bool:
        conds = [self.on(e) for e in EDGES]
        return any(isinstance(c, (Dirichlet, Convection)) for c in conds)


@dataclass(frozen=True)
class EdgeConstraint:
    edge: str
    component: str  # "u1" | "u2"
    value: object = 0.0  # number or f(x, y)


@dataclass(frozen=True)
class PointConstraint:
    corner: str  # key of CORNERS
    component: str
    value: float = 0.0


@dataclass(frozen=True)
class EdgeTraction:
    edge: str
    tx: float = 0.0
    ty: float = 0.0


@dataclass(frozen=True)
class MechBCSet:
    """Displacement constraints, edge tractions and body force.

    Defaults are traction-free, zero body force; the constraint list must
    remove all rigid-body modes (a singular solve raises otherwise).
    """

    edges: tuple[EdgeConstraint, ...] = ()
    points: tuple[PointConstraint, ...] = ()
    tractions: tuple[EdgeTraction, ...] = ()
    body_force: tuple[float, float] = (0.0, 0.0)


# ---------------------------------------------------------------------------
# problem configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemConfig:
    L: float
    H: float
    nx: int
    ny: int
    materials: MaterialPair
    mech: MechBCSet
    thermal: ThermalBCSet | None = None
    mode: str = "plane_strain"
    uniform_delta_theta: float | None = None
    heat_source: float = 0.0
    reference_temperature: float = 0.0
    effective_stress_source: str = "inplane"  # "physical3d" | "isothermal_2d"
    name: str = ""

    def __post_init__(self):
        if self.mode not in ("plane_strain", "plane_stress"):
            raise ValueError("mode must be plane_strain or plane_stress")
        if self.effective_stress_source not in ("inplane", "physical3d", "isothermal_2d"):
            raise ValueError("unknown effective stress source")
        if self.thermal is None and self.uniform_delta_theta is None:
            raise ValueError("need thermal BCs or a uniform temperature change")
        if self.L <= 0 or self.H <= 0 or self.nx < 1 or self.ny < 1:
            raise ValueError("bad geometry or mesh density")


def _thermal_bc_from_dict(d: dict, L: float, H: float):
    kind = d["type"]
    if kind == "adiabatic":
        return Adiabatic()
    if kind == "flux":
        return Flux(q=float(d["q"]))
    if kind == "convection":
        return Convection(h=float(d["h"]), t_inf=float(d.get("t_inf", 0.0)))
    if kind == "dirichlet":
        if "profile" in d:
            if d["profile"] != "half_sine":
                raise ValueError(f"unknown dirichlet profile {d['profile']!r}")
            amp = float(d["amplitude"])
            axis = d.get("along", "x")
            span = L if axis == "x" else H
            if axis == "x":
                return Dirichlet(lambda x, y, a=amp, s=span: a * math.sin(math.pi * x / (2 * s)))
            return Dirichlet(lambda x, y, a=amp, s=span: a * math.sin(math.pi * y / (2 * s)))
        return Dirichlet(float(d.get("value", 0.0)))
    raise ValueError(f"unknown thermal bc type {kind!r}")


def problem_config_from_dict(d: dict) -> ProblemConfig:
    """Build a ProblemConfig from the JSON schema (see README)."""
    mats = d["materials"]
    if isinstance(mats, str):
        pair = MATERIALS[mats]
    else:
        pair = MaterialPair(
            metal=PhaseProperties(**mats["metal"]),
            ceramic=PhaseProperties(**mats["ceramic"]),
            name=mats.get("name", "inline"),
        )
    L, H = float(d["geometry"]["L"]), float(d["geometry"]["H"])
    thermal = None
    if "thermal_bcs" in d and d["thermal_bcs"] is not None:
        thermal = ThermalBCSet(
            **{e: _thermal_bc_from_dict(v, L, H) for e, v in d["thermal_bcs"].items()}
        )
    mech_d = d.get("mech_bcs", {})
    mech = MechBCSet(
        edges=tuple(
            EdgeConstraint(c["edge"], c["component"], float(c.get("value", 0.0)))
            for c in mech_d.get("edges", ())
        ),
        points=tuple(
            PointConstraint(c["corner"], c["component"], float(c.get("value", 0.0)))
            for c in mech_d.get("points", ())
        ),
        tractions=tuple(
            EdgeTraction(c["edge"], float(c.get("tx", 0.0)), float(c.get("ty", 0.0)))
            for c in mech_d.get("tractions", ())
        ),
        body_force=tuple(mech_d.get("body_force", (0.0, 0.0))),
    )
    return ProblemConfig(
        L=L,
        H=H,
        nx=int(d["mesh"]["nx"]),
        ny=int(d["mesh"]["ny"]),
        materials=pair,
        mech=mech,
        thermal=thermal,
        mode=d.get("mode", "plane_strain"),
        uniform_delta_theta=d.get("uniform_delta_theta"),
        heat_source=float(d.get("heat_source", 0.0)),
        reference_temperature=float(d.get("reference_temperature", 0.0)),
        effective_stress_source=d.get("effective_stress_source", "inplane"),
        name=d.get("name", ""),
    )


# ---------------------------------------------------------------------------
# mesh and basis
# ---------------------------------------------------------------------------

def _lagrange_quadratic(t):
    """1D quadratic Lagrange values and derivatives at nodes t = -1, 0, 1."""
    vals = np.array([t * (t - 1.0) / 2.0, 1.0 - t * t, t * (t + 1.0) / 2.0])
    ders = np.array([t - 0.5, -2.0 * t, t + 0.5])
    return vals, ders


def shape9(xi, eta):
    """Biquadratic shape functions and parametric derivatives at (xi, eta).

    Local node a = 3*j + i corresponds to (xi_i, eta_j) with xi_i, eta_j in
    (-1, 0, 1); returns (N[9], dN_dxi[9], dN_deta[9]).
    """
    lx, dlx = _lagrange_quadratic(float(xi))
    ly, dly = _lagrange_quadratic(float(eta))
    n = np.outer(ly, lx).ravel()
    dxi = np.outer(ly, dlx).ravel()
    deta = np.outer(dly, lx).ravel()
    return n, dxi, deta


GAUSS_1D = (
    (-math.sqrt(3.0 / 5.0), 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (math.sqrt(3.0 / 5.0), 5.0 / 9.0),
)


@dataclass(frozen=True)
class Mesh:
    """Uniform nx-by-ny grid of 9-node quadrilaterals over [0,L] x [0,H]."""

    nx: int
    ny: int
    L: float
    H: float
    coords: np.ndarray = field(repr=False)  # (n_nodes, 2)
    conn: np.ndarray = field(repr=False)  # (n_elems, 9) global node ids

    @classmethod
    def rectangle(cls, nx: int, ny: int, L: float, H: float) -> "Mesh":
        NX, NY = 2 * nx + 1, 2 * ny + 1
        xs = np.linspace(0.0, L, NX)
        ys = np.linspace(0.0, H, NY)
        X, Y = np.meshgrid(xs, ys, indexing="xy")  # node id = iy*NX + ix
        coords = np.column_stack([X.ravel(), Y.ravel()])
        conn = np.empty((nx * ny, 9), dtype=np.int64)
        for ey in range(ny):
            for ex in range(nx):
                e = ey * nx + ex
                for jl in range(3):
                    for il in range(3):
                        conn[e, 3 * jl + il] = (2 * ey + jl) * NX + (2 * ex + il)
        return cls(nx=nx, ny=ny, L=L, H=H, coords=coords, conn=conn)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elems(self) -> int:
        return self.conn.shape[0]

    def edge_nodes(self, edge: str) -> np.ndarray:
        NX, NY = 2 * self.nx + 1, 2 * self.ny + 1
        if edge == "left":
            return np.arange(NY) * NX
        if edge == "right":
            return np.arange(NY) * NX + (NX - 1)
        if edge == "bottom":
            return np.arange(NX)
        if edge == "top":
            return (NY - 1) * NX + np.arange(NX)
        raise ValueError(f"unknown edge {edge!r}")

    def edge_elements(self, edge: str):
        """(element ids, local node triple along the edge, edge length per element)."""
        if edge == "left":
            elems = np.arange(self.ny) * self.nx
            locals_ = np.array([0, 3, 6])
            h = self.H / self.ny
        elif edge == "right":
            elems = np.arange(self.ny) * self.nx + (self.nx - 1)
            locals_ = np.array([2, 5, 8])
            h = self.H / self.ny
        elif edge == "bottom":
            elems = np.arange(self.nx)
            locals_ = np.array([0, 1, 2])
            h = self.L / self.nx
        elif edge == "top":
            elems = (self.ny - 1) * self.nx + np.arange(self.nx)
            locals_ = np.array([6, 7, 8])
            h = self.L / self.nx
        else:
            raise ValueError(f"unknown edge {edge!r}")
        return elems, locals_, h

    def corner_node(self, corner: str) -> int:
        fx, fy = CORNERS[corner]
        ix = int(round(fx * 2 * self.nx))
        iy = int(round(fy * 2 * self.ny))
        return iy * (2 * self.nx + 1) + ix


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class FemResult:
    """Fields and scalar summaries of one thermoelastic solve."""

    mesh: Mesh
    profile: Profile2D
    nodal_temperature: np.ndarray  # (n_nodes,)
    nodal_displacement: np.ndarray  # (n_nodes, 2)
    gauss_xy: np.ndarray  # (n_elems, 9, 2)
    gauss_effective_stress: np.ndarray  # (n_elems, 9)
    sigma_e_max: float
    v_ca: float
    max_metal_temperature: float

    def summary(self) -> dict:
        return {
            "sigma_e_max": self.sigma_e_max,
            "v_ca": self.v_ca,
            "max_metal_temperature": self.max_metal_temperature,
        }


def write_result_files(result: FemResult, out_dir) -> None:
    """JSON summary plus (x, y, value) CSV grids for any contour plotter."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(result.summary(), indent=2, sort_keys=True))

    def dump(name, xs, ys, vals):
        with open(out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for x, y, v in zip(xs, ys, vals):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])

    c = result.mesh.coords
    dump("temperature.csv", c[:, 0], c[:, 1], result.nodal_temperature)
    g = result.gauss_xy.reshape(-1, 2)
    dump("effective_stress.csv", g[:, 0], g[:, 1], result.gauss_effective_stress.ravel())
    p = result.profile
    px, py = np.meshgrid(np.linspace(0, p.L, p.nx + 1), np.linspace(0, p.H, p.ny + 1), indexing="ij")
    dump("volume_fraction.csv", px.ravel(), py.ravel(), p.grid.ravel())


# ---------------------------------------------------------------------------
# effective stress
# ---------------------------------------------------------------------------

def effective_stress(sxx, syy, szz, sxy):
    """Von Mises invariant sqrt(3/2 dev:dev) of a symmetric tensor.

    Vectorized over equally-shaped component arrays; invariant under adding
    any hydrostatic p*I to the inputs.
    """
    sxx, syy, szz, sxy = (np.asarray(a, dtype=float) for a in (sxx, syy, szz, sxy))
    return np.sqrt(
        0.5 * ((sxx - syy) ** 2 + (syy - szz) ** 2 + (szz - sxx) ** 2) + 3.0 * sxy**2
    )


def effective_stress_tensor(sigma) -> float:
    """Von Mises invariant of a 3x3 symmetric stress tensor."""
    s = np.asarray(sigma, dtype=float)
    if s.shape != (3, 3):
        raise ValueError("expected a 3x3 tensor")
    dev = s - np.trace(s) / 3.0 * np.eye(3)
    return float(np.sqrt(1.5 * np.tensordot(dev, dev)))


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

class ThermoelasticSolver:
    """Assembles and solves the one-way coupled problem for one configuration.

    Immutable after construction; independent solves on different profiles
    share no mutable state and may run concurrently.
    """

    def __init__(self, config: ProblemConfig):
        self.config = config
        self.mesh = Mesh.rectangle(config.nx, config.ny, config.L, config.H)
        self._build_basis()
        self._build_indices()
        self._build_thermal_bcs()
        self._build_mech_bcs()

    # -- precomputation ----------------------------------------------------

    def _build_basis(self):
        mesh = self.mesh
        hx, hy = mesh.L / mesh.nx, mesh.H / mesh.ny
        det = hx * hy / 4.0
        pts, wts, nmat, bx, by = [], [], [], [], []
        for eta, weta in GAUSS_1D:
            for xi, wxi in GAUSS_1D:
                n, dxi, deta = shape9(xi, eta)
                pts.append((xi, eta))
                wts.append(wxi * weta * det)
                nmat.append(n)
                bx.append(dxi * 2.0 / hx)
                by.append(deta * 2.0 / hy)
        self.gauss_w = np.array(wts)  # (9,), includes |J|
        self.gauss_N = np.array(nmat)  # (9 gauss, 9 nodes)
        self.gauss_bx = np.array(bx)
        self.gauss_by = np.array(by)

        # thermal: M_g = w |J| B^T B, so Ke = sum_g k_eg M_g
        B = np.stack([self.gauss_bx, self.gauss_by], axis=1)  # (9, 2, 9)
        self.therm_M = np.einsum("g,gia,gib->gab", self.gauss_w, B, B)

        # elastic B (9 gauss, 3, 18); dof order (ux0, uy0, ux1, uy1, ...)
        Bel = np.zeros((9, 3, 18))
        Bel[:, 0, 0::2] = self.gauss_bx
        Bel[:, 1, 1::2] = self.gauss_by
        Bel[:, 2, 0::2] = self.gauss_by
        Bel[:, 2, 1::2] = self.gauss_bx
        self.elast_B = Bel
        A = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        M = np.diag([2.0, 2.0, 1.0])
        self.elast_P_lam = np.einsum("g,gia,gij,gjb->gab", self.gauss_w, Bel, np.broadcast_to(A, (9, 3, 3)), Bel)
        self.elast_P_mu = np.einsum("g,gia,gij,gjb->gab", self.gauss_w, Bel, np.broadcast_to(M, (9, 3, 3)), Bel)
        self.elast_V = np.einsum("g,gia,i->ga", self.gauss_w, Bel, np.array([1.0, 1.0, 0.0]))
        self.body_V = np.einsum("g,ga->ga", self.gauss_w, self.gauss_N)  # for body force per dof dir

        # physical gauss coordinates (n_elems, 9, 2)
        xi = np.array([p[0] for p in pts])
        eta = np.array([p[1] for p in pts])
        ex = np.arange(mesh.nx)
        ey = np.arange(mesh.ny)
        x0 = np.repeat(ex * hx, 1)
        centers_x = np.tile(x0 + hx / 2.0, mesh.ny)
        centers_y = np.repeat(ey * hy + hy / 2.0, mesh.nx)
        gx = centers_x[:, None] + xi[None, :] * hx / 2.0
        gy = centers_y[:, None] + eta[None, :] * hy / 2.0
        self.gauss_xy = np.stack([gx, gy], axis=-1)

        # 1D quadratic edge basis at 3-point Gauss, for edge integrals
        e_n, e_w = [], []
        for t, w in GAUSS_1D:
            v, _ = _lagrange_quadratic(t)
            e_n.append(v)
            e_w.append(w)
        self.edge_N = np.array(e_n)  # (3 gauss, 3 nodes)
        self.edge_w = np.array(e_w)

    def _build_indices(self):
        conn = self.mesh.conn
        self.t_rows = np.repeat(conn, 9, axis=1).ravel()
        self.t_cols = np.tile(conn, (1, 9)).ravel()
        dofs = np.empty((self.mesh.n_elems, 18), dtype=np.int64)
        dofs[:, 0::2] = 2 * conn
        dofs[:, 1::2] = 2 * conn + 1
        self.elem_dofs = dofs
        self.e_rows = np.repeat(dofs, 18, axis=1).ravel()
        self.e_cols = np.tile(dofs, (1, 18)).ravel()

    def _build_thermal_bcs(self):
        cfg = self.config
        self.dirichlet_nodes = np.array([], dtype=np.int64)
        self.dirichlet_vals = np.array([])
        self._conv_edges = []
        self._flux_edges = []
        if cfg.thermal is None:
            return
        if not cfg.thermal.is_well_posed():
            raise SingularSystem("thermal problem needs a Dirichlet or convection edge")
        fixed = {}
        for edge in EDGES:
            bc = cfg.thermal.on(edge)
            if isinstance(bc, Dirichlet):
                nodes = self.mesh.edge_nodes(edge)
                for nid in nodes:
                    x, y = self.mesh.coords[nid]
                    v = bc.value(x, y) if callable(bc.value) else float(bc.value)
                    fixed[nid] = v  # later edges override shared corners
            elif isinstance(bc, Convection):
                self._conv_edges.append((edge, bc))
            elif isinstance(bc, Flux):
                self._flux_edges.append((edge, bc))
        if fixed:
            nodes = np.array(sorted(fixed), dtype=np.int64)
            self.dirichlet_nodes = nodes
            self.dirichlet_vals = np.array([fixed[n] for n in nodes])

    def _build_mech_bcs(self):
        cfg = self.config
        comp = {"u1": 0, "u2": 1}
        fixed = {}
        for ec in cfg.mech.edges:
            for nid in self.mesh.edge_nodes(ec.edge):
                x, y = self.mesh.coords[nid]
                v = ec.value(x, y) if callable(ec.value) else float(ec.value)
                fixed[2 * nid + comp[ec.component]] = v
        for pc in cfg.mech.points:
            nid = self.mesh.corner_node(pc.corner)
            fixed[2 * nid + comp[pc.component]] = float(pc.value)
        dofs = np.array(sorted(fixed), dtype=np.int64)
        self.fixed_dofs = dofs
        self.fixed_vals = np.array([fixed[d] for d in dofs])

    # -- profile sampling ----------------------------------------------------

    def phi_at_gauss(self, profile: Profile2D) -> np.ndarray:
        """Ceramic fraction at every Gauss point, (n_elems, 9)."""
        from .profiles import interpolate

        xy = self.gauss_xy.reshape(-1, 2)
        return interpolate(profile, xy[:, 0], xy[:, 1]).reshape(self.mesh.n_elems, 9)

    def _check_profile(self, profile: Profile2D):
        if not (
            math.isclose(profile.L, self.config.L, rel_tol=1e-12)
            and math.isclose(profile.H, self.config.H, rel_tol=1e-12)
        ):
            raise OutOfDomain("profile domain does not match the plate")

    # -- thermal solve -------------------------------------------------------

    def thermal_system(self, profile: Profile2D):
        """Assembled (K, f) with convection/flux terms, before Dirichlet rows."""
        self._check_profile(profile)
        phi = self.phi_at_gauss(profile)
        kvals = material_at(self.config.materials, 1.0 - phi)["k"]
        ke = np.einsum("eg,gab->eab", kvals, self.therm_M)
        n = self.mesh.n_nodes
        rows, cols, vals = [self.t_rows], [self.t_cols], [ke.ravel()]
        f = np.zeros(n)
        if self.config.heat_source != 0.0:
            fe = self.config.heat_source * (self.gauss_w @ self.gauss_N)
            np.add.at(f, self.mesh.conn.ravel(), np.tile(fe, self.mesh.n_elems))
        for edge, bc in self._conv_edges:
            elems, locs, h_e = self.mesh.edge_elements(edge)
            scale = h_e / 2.0
            kc = bc.h * scale * np.einsum("g,ga,gb->ab", self.edge_w, self.edge_N, self.edge_N)
            fc = bc.h * bc.t_inf * scale * (self.edge_w @ self.edge_N)
            enodes = self.mesh.conn[np.ix_(elems, locs)]  # (n_edge_elems, 3)
            rows.append(np.repeat(enodes, 3, axis=1).ravel())
            cols.append(np.tile(enodes, (1, 3)).ravel())
            vals.append(np.tile(kc.ravel(), elems.size))
            np.add.at(f, enodes.ravel(), np.tile(fc, elems.size))
        for edge, bc in self._flux_edges:
            elems, locs, h_e = self.mesh.edge_elements(edge)
            fq = bc.q * (h_e / 2.0) * (self.edge_w @ self.edge_N)
            enodes = self.mesh.conn[np.ix_(elems, locs)]
            np.add.at(f, enodes.ravel(), np.tile(fq, elems.size))
        K = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        return K, f

    def solve_thermal(self, profile: Profile2D) -> np.ndarray:
        """Nodal temperature change field theta-bar."""
        if self.config.thermal is None:
            raise SingularSystem("no thermal boundary conditions configured")
        K, f = self.thermal_system(profile)
        theta = _constrained_solve(K, f, self.dirichlet_nodes, self.dirichlet_vals)
        return theta

    # -- elastic solve ---------------------------------------------------------

    def _blend_elastic(self, phi):
        props = material_at(self.config.materials, 1.0 - phi)
        E, nu, alpha = props["E"], props["nu"], props["alpha"]
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        mu = E / (2.0 * (1.0 + nu))
        if self.config.mode == "plane_stress":
            lam_eff = 2.0 * lam * mu / (lam + 2.0 * mu)
            beta = E * alpha / (1.0 - nu)
        else:
            lam_eff = lam
            beta = E * alpha / (1.0 - 2.0 * nu)
        return lam, mu, lam_eff, beta, nu

    def solve_elastic(self, profile: Profile2D, theta_nodal: np.ndarray) -> np.ndarray:
        """Nodal displacements (n_nodes, 2) under thermal + mechanical loads."""
        self._check_profile(profile)
        if self.fixed_dofs.size == 0:
            raise SingularSystem("no displacement constraints; rigid modes present")
        phi = self.phi_at_gauss(profile)
        _, mu, lam_eff, beta, _ = self._blend_elastic(phi)
        ke = np.einsum("eg,gab->eab", lam_eff, self.elast_P_lam) + np.einsum(
            "eg,gab->eab", mu, self.elast_P_mu
        )
        ndof = 2 * self.mesh.n_nodes
        K = sp.coo_matrix((ke.ravel(), (self.e_rows, self.e_cols)), shape=(ndof, ndof)).tocsr()

        f = np.zeros(ndof)
        theta_g = theta_nodal[self.mesh.conn] @ self.gauss_N.T  # (n_elems, 9)
        fe = np.einsum("eg,ga->ea", beta * theta_g, self.elast_V)
        np.add.at(f, self.elem_dofs.ravel(), fe.ravel())
        bx, by = self.config.mech.body_force
        if bx != 0.0 or by != 0.0:
            fb = self.gauss_w @ self.gauss_N  # (9 nodes,)
            fe = np.zeros(18)
            fe[0::2] = bx * fb
            fe[1::2] = by * fb
            np.add.at(f, self.elem_dofs.ravel(), np.tile(fe, self.mesh.n_elems))
        for tr in self.config.mech.tractions:
            elems, locs, h_e = self.mesh.edge_elements(tr.edge)
            ft = (h_e / 2.0) * (self.edge_w @ self.edge_N)  # (3,)
            enodes = self.mesh.conn[np.ix_(elems, locs)]
            np.add.at(f, (2 * enodes).ravel(), np.tile(tr.tx * ft, elems.size))
            np.add.at(f, (2 * enodes + 1).ravel(), np.tile(tr.ty * ft, elems.size))

        u = _constrained_solve(K, f, self.fixed_dofs, self.fixed_vals)
        return u.reshape(-1, 2)

    # -- post-processing ---------------------------------------------------

    def gauss_stress(self, profile: Profile2D, u: np.ndarray, theta_nodal: np.ndarray):
        """Physical stress components and effective stress at Gauss points."""
        phi = self.phi_at_gauss(profile)
        lam, mu, lam_eff, beta, nu = self._blend_elastic(phi)
        ue = u.reshape(-1)[self.elem_dofs]  # (n_elems, 18)
        strain = np.einsum("gsd,ed->egs", self.elast_B, ue)  # (e, g, 3)
        theta_g = theta_nodal[self.mesh.conn] @ self.gauss_N.T
        tr2 = strain[:, :, 0] + strain[:, :, 1]
        sm_xx = lam_eff * tr2 + 2.0 * mu * strain[:, :, 0]
        sm_yy = lam_eff * tr2 + 2.0 * mu * strain[:, :, 1]
        sm_xy = mu * strain[:, :, 2]
        bt = beta * theta_g
        sxx, syy, sxy = sm_xx - bt, sm_yy - bt, sm_xy
        if self.config.mode == "plane_strain":
            szz = lam * tr2 - bt
        else:
            szz = np.zeros_like(sxx)
        source = self.config.effective_stress_source
        if source == "isothermal_2d":
            szz_m = lam * tr2 if self.config.mode == "plane_strain" else np.zeros_like(sxx)
            se = effective_stress(sm_xx, sm_yy, szz_m, sm_xy)
        elif source == "physical3d":
            se = effective_stress(sxx, syy, szz, sxy)
        else:  # in-plane: out-of-plane component excluded from the deviator
            se = effective_stress(sxx, syy, np.zeros_like(sxx), sxy)
        return {"sxx": sxx, "syy": syy, "szz": szz, "sxy": sxy, "effective": se}

    def interpolate_field(self, nodal: np.ndarray, x, y):
        """Biquadratic interpolation of a nodal field at points inside the plate."""
        mesh = self.mesh
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        tol = 1e-12 * max(mesh.L, mesh.H)
        if np.any(x < -tol) or np.any(x > mesh.L + tol) or np.any(y < -tol) or np.any(y > mesh.H + tol):
            raise OutOfDomain("query point outside the plate domain")
        hx, hy = mesh.L / mesh.nx, mesh.H / mesh.ny
        ex = np.clip((x / hx).astype(int), 0, mesh.nx - 1)
        ey = np.clip((y / hy).astype(int), 0, mesh.ny - 1)
        xi = 2.0 * (x - ex * hx) / hx - 1.0
        eta = 2.0 * (y - ey * hy) / hy - 1.0
        lx = np.stack([xi * (xi - 1) / 2, 1 - xi * xi, xi * (xi + 1) / 2], axis=-1)
        ly = np.stack([eta * (eta - 1) / 2, 1 - eta * eta, eta * (eta + 1) / 2], axis=-1)
        N = (ly[:, :, None] * lx[:, None, :]).reshape(x.size, 9)
        vals = nodal[mesh.conn[ey * mesh.nx + ex]]
        return np.einsum("pa,pa->p", N, vals)

    def temperature_on_profile_grid(self, theta_nodal: np.ndarray, profile: Profile2D) -> np.ndarray:
        xs = np.linspace(0.0, profile.L, profile.nx + 1)
        ys = np.linspace(0.0, profile.H, profile.ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return self.interpolate_field(theta_nodal, X.ravel(), Y.ravel()).reshape(X.shape)

    def v_ca(self, profile: Profile2D) -> float:
        """Domain-average ceramic fraction by the element Gauss rule."""
        phi = self.phi_at_gauss(profile)
        return float((phi * self.gauss_w).sum() / (self.config.L * self.config.H))

    def run(self, profile: Profile2D) -> FemResult:
        """Thermal (or uniform-change) analysis, elastic analysis, summaries."""
        cfg = self.config
        if cfg.uniform_delta_theta is not None:
            theta = np.full(self.mesh.n_nodes, float(cfg.uniform_delta_theta))
        else:
            theta = self.solve_thermal(profile)
        u = self.solve_elastic(profile, theta)
        se = self.gauss_stress(profile, u, theta)["effective"]
        theta_grid = self.temperature_on_profile_grid(theta, profile)
        metal = profile.grid < 1.0
        max_metal_t = float(theta_grid[metal].max()) if metal.any() else float("-inf")
        return FemResult(
            mesh=self.mesh,
            profile=profile,
            nodal_temperature=theta,
            nodal_displacement=u,
            gauss_xy=self.gauss_xy,
            gauss_effective_stress=se,
            sigma_e_max=float(se.max()),
            v_ca=self.v_ca(profile),
            max_metal_temperature=max_metal_t,
        )


def _constrained_solve(K: sp.csr_matrix, f: np.ndarray, fixed: np.ndarray, fixed_vals: np.ndarray) -> np.ndarray:
    """Direct sparse solve with Dirichlet rows eliminated symmetrically."""
    n = f.size
    free = np.setdiff1d(np.arange(n), fixed, assume_unique=False)
    rhs = f[free]
    if fixed.size:
        rhs = rhs - K[free][:, fixed] @ fixed_vals
    Kff = K[free][:, free].tocsc()
    try:
        lu = spla.splu(Kff)
        x_free = lu.solve(rhs)
    except RuntimeError as exc:  # exactly singular factor
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x_free)):
        raise SingularSystem("solver produced non-finite values; system under-constrained")
    denom = np.linalg.norm(rhs)
    res = np.linalg.norm(Kff @ x_free - rhs)
    if res > RESIDUAL_TOL * max(denom, 1e-30):
        raise SingularSystem(f"linear solve residual {res / max(denom, 1e-30):.2e} above tolerance")
    x = np.zeros(n)
    x[free] = x_free
    if fixed.size:
        x[fixed] = fixed_vals
    return x


def run_thermoelastic(profile: Profile2D, config: ProblemConfig) -> FemResult:
    """One-shot convenience wrapper around ThermoelasticSolver."""
    return ThermoelasticSolver(config).run(profile)
