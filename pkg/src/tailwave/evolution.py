"""Double-null characteristic evolution of the spherical wave equation on Schwarzschild.

The field is carried as psi = r*phi on the lattice

    u_i = i*h,   v_j = v0 + j*h,   r* = (v - u)/2,   t = (u + v)/2,

so every node on a diagonal d = j - i shares the same areal radius. Rows are
marched in u; each row is swept in v with the diamond rule

    psi_N = psi_W + psi_E - psi_S - (h^2/8) V (psi_W + psi_E) + (h^2/4) G

where S = (i, j), W = (i+1, j), E = (i, j+1), N = (i+1, j+1).
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .coefficients import CoefficientProfile, eval_H, japanese
from .errors import BlowupError, DomainError, GridError, ResolutionError, StencilError
from .geometry import CoordinateMap, MetricParams, areal_from_tortoise_array

__all__ = [
    "GridSpec",
    "InitialData",
    "NullGrid",
    "ObserverSeries",
    "RunResult",
    "rw_potential",
    "diamond_step",
    "quasilinear_source",
    "evolve",
    "characteristic_march",
    "RSTAR_MIN",
    "MIN_POINTS_PER_SIGMA",
]

RSTAR_MIN = -60.0
MIN_POINTS_PER_SIGMA = 16
DATA_PROFILES = ("gaussian-bump", "compact-bump")
# rows whose source uses a shortened stencil (row 0 has no lagged rows at all)
SKIPPED_SOURCE_ROWS = (0,)
ONE_SIDED_ROWS = (1,)
# stored psi arrays above this many nodes are subsampled
DEFAULT_STORE_LIMIT = 20_000_000


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Extent and spacing of the characteristic domain (du = dv = h)."""

    du: float
    u_max: float
    v_max: float
    v0: float = -40.0
    rstar_min: float = RSTAR_MIN

    def __post_init__(self):
        if not (self.du > 0 and math.isfinite(self.du)):
            raise GridError(f"du must be positive, got {self.du}")
        if not self.u_max > 0:
            raise GridError(f"u_max must be positive, got {self.u_max}")
        if not self.v_max > self.v0:
            raise GridError("v_max must exceed v0")
        if not self.rstar_min < 0:
            raise GridError("rstar_min must be negative")

    @property
    def dv(self) -> float:
        return self.du

    @property
    def n_u(self) -> int:
        return int(round(self.u_max / self.du))

    @property
    def n_v(self) -> int:
        return int(round((self.v_max - self.v0) / self.du))

    @property
    def d_min(self) -> int:
        """Lowest stored diagonal; cells below 2*rstar_min are truncated."""
        return max(-self.n_u, math.ceil((2.0 * self.rstar_min - self.v0) / self.du - 1e-9))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InitialData:
    """Profile of psi on the outgoing segment {u = 0}."""

    epsilon: float = 1e-3
    v_c: float = 0.0
    sigma: float = 4.0
    profile: str = "gaussian-bump"

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")
        if self.profile not in DATA_PROFILES:
            raise DomainError(f"unknown data profile {self.profile!r}")

    def __call__(self, v):
        x = (np.asarray(v, dtype=float) - self.v_c) / self.sigma
        if self.profile == "gaussian-bump":
            return self.epsilon * np.exp(-0.5 * x * x)
        # exact support [v_c - 3 sigma, v_c + 3 sigma], peak epsilon
        s = x / 3.0
        out = np.zeros_like(s)
        inside = np.abs(s) < 1.0
        out[inside] = self.epsilon * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return out

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ObserverSeries:
    """Samples of phi, d_t phi and S phi along a line of constant r*."""

    rstar_obs: float
    r_obs: float
    t: np.ndarray
    phi: np.ndarray
    dt_phi: np.ndarray
    S_phi: np.ndarray
    dr_phi: np.ndarray | None = None

    def __post_init__(self):
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise GridError("observer times must be strictly increasing")

    @property
    def samples(self):
        return list(zip(self.t, self.phi, self.dt_phi, self.S_phi))

    def to_csv(self, path) -> None:
        data = np.column_stack([self.t, self.phi, self.dt_phi, self.S_phi])
        np.savetxt(path, data, delimiter=",", header="t,phi,dt_phi,S_phi", comments="", fmt="%.17g")


@dataclass
class NullGrid:
    """Stored psi on a (possibly subsampled) copy of the characteristic lattice.

    ``psi[a, b]`` holds psi at u = u0 + a*stride*du, v = v0 + b*stride*dv.
    Nodes below r* = rstar_min carry the row's boundary value and are marked
    False in ``valid``. ``r_cache`` holds r(r*) per fine-grid diagonal.
    """

    du: float
    dv: float
    u_max: float
    v_max: float
    v0: float
    psi: np.ndarray
    params: MetricParams
    stride: int = 1
    rstar_min: float = RSTAR_MIN
    u0: float = 0.0
    r_cache: dict = field(default_factory=dict, repr=False)

    @property
    def h(self) -> float:
        return self.du * self.stride

    @property
    def u(self) -> np.ndarray:
        return self.u0 + np.arange(self.psi.shape[0]) * self.h

    @property
    def v(self) -> np.ndarray:
        return self.v0 + np.arange(self.psi.shape[1]) * self.h

    @property
    def valid(self) -> np.ndarray:
        rstar = 0.5 * (self.v[None, :] - self.u[:, None])
        return rstar >= self.rstar_min - 1e-9 * self.h

    def coords(self):
        """(t, r*, r, gap) on the stored lattice."""
        U, V = np.meshgrid(self.u, self.v, indexing="ij")
        t = 0.5 * (U + V)
        rstar = 0.5 * (V - U)
        r, gap = _radius_lookup(self, rstar)
        return t, rstar, r, gap

    def phi(self) -> np.ndarray:
        return self.psi / self.coords()[2]

    def window(self, u_lo: float, u_hi: float, v_lo: float, v_hi: float, pad: int = 2) -> "NullGrid":
        """View of the stored lattice covering [u_lo, u_hi] x [v_lo, v_hi] plus ``pad`` nodes."""
        h = self.h
        a0 = max(0, math.floor((u_lo - self.u0) / h) - pad)
        a1 = min(self.psi.shape[0], math.ceil((u_hi - self.u0) / h) + pad + 1)
        b0 = max(0, math.floor((v_lo - self.v0) / h) - pad)
        b1 = min(self.psi.shape[1], math.ceil((v_hi - self.v0) / h) + pad + 1)
        if a1 <= a0 or b1 <= b0:
            raise GridError("requested window does not meet the stored lattice")
        return NullGrid(du=self.du, dv=self.dv, u_max=self.u_max, v_max=self.v_max,
                        v0=self.v0 + b0 * h, psi=self.psi[a0:a1, b0:b1], params=self.params,
                        stride=self.stride, rstar_min=self.rstar_min, u0=self.u0 + a0 * h,
                        r_cache=self.r_cache)


def _radius_lookup(grid: NullGrid, rstar: np.ndarray):
    """r and r - 2M at lattice r* values, from the per-diagonal cache when possible."""
    c = grid.r_cache
    if c and "rstar" in c:
        rs0, step = c["rstar"][0], 0.5 * grid.du
        k = np.rint((rstar - rs0) / step).astype(np.int64)
        if k.min() >= 0 and k.max() < c["r"].size and np.allclose(c["rstar"][k], rstar, atol=1e-9):
            return c["r"][k], c["gap"][k]
    r, gap = areal_from_tortoise_array(CoordinateMap(grid.params), rstar.ravel())
    return r.reshape(rstar.shape), gap.reshape(rstar.shape)


@dataclass
class RunResult:
    series: list
    meta: dict
    grid: NullGrid | None = None


# ---------------------------------------------------------------------------
# pointwise pieces
# ---------------------------------------------------------------------------

def rw_potential(params: MetricParams, r, l: int = 0, gap=None):
    """Regge-Wheeler potential V_l = (1 - 2M/r)(l(l+1)/r^2 + 2M/r^3)."""
    if l < 0 or int(l) != l:
        raise DomainError(f"multipole index must be a non-negative integer, got {l}")
    M = params.M
    r = np.asarray(r, dtype=float)
    g = r - 2.0 * M if gap is None else np.asarray(gap, dtype=float)
    if np.any(~(g > 0)):
        raise DomainError("rw_potential needs r > 2M")
    out = (g / r) * (l * (l + 1) / r**2 + 2.0 * M / r**3)
    return out[()] if out.ndim == 0 else out


def diamond_step(psi_s, psi_w, psi_e, V_c, G_c, du, dv):
    """One cell of the second-order diamond rule."""
    return psi_w + psi_e - psi_s - (du * dv / 8.0) * V_c * (psi_w + psi_e) + (du * dv / 4.0) * G_c


def _phi_uu_centre(phi, i, j, h):
    """d^2 phi/du^2 at the centre of cell (i, j) from rows i-2..i+1."""
    if i < 1:
        raise StencilError("source stencil needs at least one lagged row")
    out = 0.0
    for col in (j, j + 1):
        d_i = (phi[i + 1, col] - 2.0 * phi[i, col] + phi[i - 1, col]) / (h * h)
        if i >= 2:
            d_im = (phi[i, col] - 2.0 * phi[i - 1, col] + phi[i - 2, col]) / (h * h)
            out += 1.5 * d_i - 0.5 * d_im
        else:
            out += d_i
    return 0.5 * out


def quasilinear_source(phi, i: int, j: int, h: float, profile: CoefficientProfile,
                       t_c: float, rstar_c: float, r_c: float) -> float:
    """G at the centre of cell (i, j) from a local patch of phi values.

    ``phi`` is indexable as ``phi[row, col]`` and must hold rows i-2..i+1
    (row i+1 at column j+1 is the current estimate of the north node).
    L̄ = 2 d_u on the grid, so L̄L̄phi = 4 phi_uu.
    """

    if profile.h0 == 0.0 and profile.cubic_c == 0.0:
        return 0.0
    phi_c = 0.25 * (phi[i + 1, j] + phi[i, j + 1] + phi[i, j] + phi[i + 1, j + 1])
    lbar2 = 4.0 * _phi_uu_centre(phi, i, j, h)
    H = float(eval_H(profile, t_c, rstar_c))
    return r_c * (H * phi_c * lbar2 + profile.cubic_c * phi_c * phi_c * lbar2)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _march(row0, col0, h, n_u, n_v, d_min, V, invr, r_d, Hrow, Hcol, h0, cubic,
           passes, tol, obs_d, obs_out, stride, store):
    """March rows 1..n_u. Returns (status, bad_row, psi_min, psi_max, sup_phi, fp_iters).

    Diagonal arrays are indexed by d - d_min. obs_out[i, k, m] holds psi at
    column i + obs_d[k] - 1 + m. status 0 is success, 1 means a non-finite
    value appeared on row bad_row.
    """
    nv1 = n_v + 1
    rows = np.full((4, nv1), np.nan)  # ring buffer, row i lives at slot i % 4
    rows[0, :] = row0
    h2 = h * h
    nonlin = h0 != 0.0 or cubic != 0.0
    psi_min = np.inf
    psi_max = -np.inf
    sup_phi = 0.0
    fp_total = 0
    n_obs = obs_d.shape[0]

    for j in range(nv1):
        x = row0[j]
        psi_min = min(psi_min, x)
        psi_max = max(psi_max, x)
        dd = j - d_min
        if dd >= 0:
            sup_phi = max(sup_phi, abs(x) * invr[dd])

    for i in range(n_u + 1):
        cur = rows[i % 4]
        if i > 0:
            prev = rows[(i - 1) % 4]
            prev2 = rows[(i - 2) % 4]
            prev3 = rows[(i - 3) % 4]
            jb = i + d_min
            if jb <= 0:
                jb = 0
                cur[0] = col0[i]
            else:
                cur[:jb] = np.nan
                cur[jb] = prev[jb]
            for j in range(jb, n_v):
                dd = j - i + 1 - d_min  # diagonal of the S and N nodes
                ps = prev[j]
                pw = cur[j]
                pe = prev[j + 1]
                lin = pw + pe - ps - 0.125 * h2 * V[dd] * (pw + pe)
                if nonlin and i >= 2:
                    # cells whose south row is 0 carry no source; south row 1 drops the lag term
                    # phi on the stencil; diagonals: S,N -> dd, W -> dd-1, E -> dd+1
                    fS = ps * invr[dd]
                    fW = pw * invr[dd - 1]
                    fE = pe * invr[dd + 1]
                    # lagged second differences in u at columns j and j+1
                    f1j = prev2[j] * invr[dd + 1]
                    f1e = prev2[j + 1] * invr[dd + 2]
                    d_i_j = (fW - 2.0 * fS + f1j) / h2
                    phi_c_base = 0.5 * (fW + fE)
                    if i >= 3:
                        f2j = prev3[j] * invr[dd + 2]
                        f2e = prev3[j + 1] * invr[dd + 3]
                        d_im_j = (fS - 2.0 * f1j + f2j) / h2
                        d_im_e = (fE - 2.0 * f1e + f2e) / h2
                        c_i = 1.5
                        c_im = 0.5
                    else:
                        d_im_j = 0.0
                        d_im_e = 0.0
                        c_i = 1.0
                        c_im = 0.0
                    H = h0 * min(1.0, Hrow[i - 1] * Hcol[j])
                    pn = lin
                    for it in range(passes):
                        fN = pn * invr[dd]
                        d_i_e = (fN - 2.0 * fE + f1e) / h2
                        phi_uu = 0.5 * ((c_i * d_i_j - c_im * d_im_j) + (c_i * d_i_e - c_im * d_im_e))
                        phi_c = 0.5 * (phi_c_base + 0.5 * (fS + fN))
                        G = r_d[dd] * (H + cubic * phi_c) * phi_c * 4.0 * phi_uu
                        new = lin + 0.25 * h2 * G
                        fp_total += 1
                        done = abs(new - pn) <= tol * abs(new)
                        pn = new
                        if done:
                            break
                    cur[j + 1] = pn
                else:
                    cur[j + 1] = lin
            # finiteness and extrema
            for j in range(jb, nv1):
                x = cur[j]
                if not math.isfinite(x):
                    return 1, i, psi_min, psi_max, sup_phi, fp_total
                if x < psi_min:
                    psi_min = x
                if x > psi_max:
                    psi_max = x
                a = abs(x) * invr[j - i - d_min]
                if a > sup_phi:
                    sup_phi = a
        # observers
        for k in range(n_obs):
            for m in range(4):
                col = i + obs_d[k] - 1 + m
                if col >= 0 and col < nv1:
                    obs_out[i, k, m] = cur[col]
        # storage
        if stride > 0 and i % stride == 0:
            a = i // stride
            jb = max(0, i + d_min)
            for b in range(store.shape[1]):
                col = b * stride
                store[a, b] = cur[col] if col >= jb else cur[jb]
    return 0, -1, psi_min, psi_max, sup_phi, fp_total


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def _diagonal_tables(params: MetricParams, spec: GridSpec, l: int, potential_scale: float):
    """r, 1/r and V per diagonal d in [d_min, n_v + 1]."""
    d = np.arange(spec.d_min, spec.n_v + 2)
    rstar = 0.5 * (spec.v0 + d * spec.du)
    r, gap = areal_from_tortoise_array(CoordinateMap(params), rstar)
    V = potential_scale * rw_potential(params, r, l, gap=gap)
    return rstar, r, gap, V


def _observer_diagonals(spec: GridSpec, observers):
    """(lower diagonal, interpolation weight) for each observer r*."""
    out = []
    for rs in observers:
        x = (2.0 * rs - spec.v0) / spec.du
        lo = math.floor(x + 1e-9)
        w = x - lo
        if abs(w) < 1e-9:
            w = 0.0
        if lo - 1 < spec.d_min or lo + 2 > spec.n_v:
            raise GridError(f"observer r*={rs} lies outside the computational diamond")
        out.append((lo, w))
    return out


def _run_kernel(row0, col0, spec: GridSpec, V, r, Hrow, Hcol, h0, cubic, passes, tol,
                obs_d, store_stride):
    n_u, n_v = spec.n_u, spec.n_v
    obs_out = np.full((n_u + 1, len(obs_d), 4), np.nan)
    if store_stride:
        store = np.empty((n_u // store_stride + 1, n_v // store_stride + 1))
    else:
        store = np.empty((0, 0))
    status = _march(np.ascontiguousarray(row0, dtype=float), np.ascontiguousarray(col0, dtype=float),
                    float(spec.du), n_u, n_v, spec.d_min, V, 1.0 / r, r, Hrow, Hcol,
                    float(h0), float(cubic), int(passes), float(tol),
                    np.asarray(obs_d, dtype=np.int64), obs_out, int(store_stride or 0), store)
    return status, obs_out, store


def characteristic_march(row0, col0, du: float, V_diag=None):
    """Linear march on a full (untruncated) square lattice of spacing du.

    ``row0[j]`` is psi on u = 0, ``col0[i]`` psi on v = v0 (they must agree at
    the corner). ``V_diag`` maps a diagonal index d = j - i in [-n_u, n_v + 1]
    to the cell potential (default V = 0). Returns the full psi array.
    """
    row0 = np.asarray(row0, dtype=float)
    col0 = np.asarray(col0, dtype=float)
    n_u, n_v = col0.size - 1, row0.size - 1
    spec = GridSpec(du=du, u_max=n_u * du, v_max=n_v * du, v0=0.0, rstar_min=-1e300)
    n_d = n_v + 2 + n_u
    V = np.zeros(n_d) if V_diag is None else np.asarray(V_diag, dtype=float)
    if V.size != n_d:
        raise GridError(f"V_diag needs {n_d} entries")
    ones = np.ones(max(n_u, n_v) + 2)
    status, _, store = _run_kernel(row0, col0, spec, V, np.ones(n_d), ones, ones, 0.0, 0.0, 0, 0.0,
                                   [], 1)
    if status[0]:
        raise BlowupError("non-finite value in characteristic_march", row=status[1])
    return store


def evolve(params: MetricParams, profile: CoefficientProfile, data: InitialData, grid: GridSpec,
           observers=(10.0,), l: int = 0, passes: int = 2, tol: float = 1e-10,
           store_stride: int | None = None, store_limit: int = DEFAULT_STORE_LIMIT,
           potential_scale: float = 1.0) -> RunResult:
    """Solve the characteristic initial value problem and sample observers.

    psi(0, v) is the data profile; psi(u, v0) = psi(0, v0). ``store_stride``
    of 0 disables storing psi, None picks the smallest stride whose stored
    array stays under ``store_limit`` nodes. ``potential_scale`` multiplies V
    and exists for mutation tests.
    """
    if not params.is_schwarzschild:
        raise DomainError("evolution is implemented for Schwarzschild (a = 0) only")
    if l != 0 and not profile.is_linear:
        raise DomainError("quasilinear runs are restricted to l = 0")
    if data.sigma / grid.dv < MIN_POINTS_PER_SIGMA:
        raise ResolutionError(
            f"sigma/dv = {data.sigma / grid.dv:g} < {MIN_POINTS_PER_SIGMA}; refine the grid")
    if profile.kind == "full-tensor":
        raise DomainError("the spherical solver couples only the LbarLbar slot; use kind "
                          "'LbarLbar-only' or 'constant'")
    if passes < 1:
        raise DomainError("passes must be >= 1")

    t0 = time.perf_counter()
    h = grid.du
    n_u, n_v = grid.n_u, grid.n_v
    rstar_d, r_d, gap_d, V = _diagonal_tables(params, grid, l, potential_scale)
    obs = _observer_diagonals(grid, observers)

    v_nodes = grid.v0 + h * np.arange(n_v + 1)
    row0 = data(v_nodes)
    col0 = np.full(n_u + 1, row0[0])

    u_c = h * (np.arange(n_u + 1) + 0.5)
    v_c = grid.v0 + h * (np.arange(n_v + 1) + 0.5)
    # the kernel clips Hrow*Hcol at 1, matching eval_H for r* < 0
    if profile.kind == "constant":
        Hrow, Hcol = np.ones_like(u_c), np.ones_like(v_c)
    else:
        Hrow, Hcol = japanese(u_c) ** profile.delta, japanese(v_c) ** (-profile.delta)

    if store_stride is None:
        nodes = (n_u + 1) * (n_v + 1)
        store_stride = max(1, math.ceil(math.sqrt(nodes / store_limit)))
    status, obs_out, store = _run_kernel(
        row0, col0, grid, V, r_d, Hrow, Hcol, profile.h0, profile.cubic_c, passes, tol,
        [d for d, _ in obs], store_stride)
    code, bad_row, psi_min, psi_max, sup_phi, fp_iters = status
    wall = time.perf_counter() - t0

    cmap = CoordinateMap(params)
    null_grid = None
    if store_stride:
        null_grid = NullGrid(du=h, dv=h, u_max=grid.u_max, v_max=grid.v_max, v0=grid.v0,
                             psi=store, params=params, stride=store_stride,
                             rstar_min=0.5 * (grid.v0 + grid.d_min * h),
                             r_cache={"rstar": rstar_d, "r": r_d, "gap": gap_d})
    if code:
        last = None
        if null_grid is not None:
            last = store[: max(0, (bad_row - 1) // store_stride) + 1]
        raise BlowupError(f"non-finite psi on row {bad_row} (u = {bad_row * h:g})",
                          last_good=last, row=bad_row)

    series = [_extract_series(cmap, grid, rs, d_lo, w, obs_out[:, k, :])
              for k, (rs, (d_lo, w)) in enumerate(zip(observers, obs))]

    meta = {
        "grid": {**grid.to_dict(), "n_u": n_u, "n_v": n_v, "d_min": grid.d_min,
                 "store_stride": store_stride},
        "sup_phi": float(sup_phi),
        "psi_min": float(psi_min),
        "psi_max": float(psi_max),
        "wall_seconds": wall,
        "l": l,
        "passes": passes,
        "tol": tol,
        "fixed_point_evaluations": int(fp_iters),
        "source_rows_skipped": list(SKIPPED_SOURCE_ROWS) if not profile.is_linear else [],
        "one_sided_rows": list(ONE_SIDED_ROWS) if not profile.is_linear else [],
        "potential_scale": potential_scale,
    }
    return RunResult(series=series, meta=meta, grid=null_grid)


def _extract_series(cmap: CoordinateMap, grid: GridSpec, rstar_obs: float, d_lo: int, w: float,
                    cols: np.ndarray) -> ObserverSeries:
    """Interpolate psi and d_v psi onto v - u = 2 rstar_obs and convert to phi."""
    h = grid.du
    keep = np.all(np.isfinite(cols), axis=1)
    # rows are complete up to the point where the diagonal leaves v <= v_max
    n = int(np.argmin(keep)) if not keep.all() else keep.size
    cols = cols[:n]
    psi = (1.0 - w) * cols[:, 1] + w * cols[:, 2]
    psi_v = (1.0 - w) * (cols[:, 2] - cols[:, 0]) / (2 * h) + w * (cols[:, 3] - cols[:, 1]) / (2 * h)
    u = h * np.arange(n)
    t = u + rstar_obs
    psi_t = np.gradient(psi, t, edge_order=2) if n > 2 else np.zeros_like(psi)
    psi_rs = 2.0 * psi_v - psi_t
    r = areal_from_tortoise_array(cmap, np.array([rstar_obs]))
    r_obs, gap = float(r[0][0]), float(r[1][0])
    f = gap / r_obs
    phi = psi / r_obs
    dt_phi = psi_t / r_obs
    drs_phi = psi_rs / r_obs - f * psi / r_obs**2
    dr_phi = drs_phi / f
    S_phi = t * dt_phi + r_obs * dr_phi
    return ObserverSeries(rstar_obs=float(rstar_obs), r_obs=r_obs, t=t, phi=phi, dt_phi=dt_phi,
                          S_phi=S_phi, dr_phi=dr_phi)
