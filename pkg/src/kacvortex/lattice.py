"""Lattice XY sandbox with long-range scaled couplings and block-spin averaging.

Sites carry angles theta in [0, 2pi); couplings are J_g(i,j) = g^2 J(g|i-j|)
with J the same normalized planar interaction used on the continuum side and
g = 2^{-k} the inverse interaction range.  Coarse graining averages the unit
vectors over square blocks of side ~ g^{-delta} sites.

The chain is sampled by single-site Metropolis moves with an adaptive
proposal width; all randomness is drawn from a counter-based generator ahead
of each sweep, so runs are bit-reproducible for a given seed.  One chain is
sequential; independent chains share only the immutable coupling table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import special as _sp
from scipy import stats as _stats

from .grids import ConfigError
from .kernels import KernelSpec
from .meanfield import DomainError, ThermoContext, entropy, free_energy_density
from .energy import IllDefinedDegreeError, degree
from .quadrature import gauss_panels


@dataclass(frozen=True)
class LatticeConfig:
    """Geometry, temperature and sampler controls for one lattice run."""

    L_side: int
    k_gamma: int                       # gamma = 2^{-k_gamma}
    beta: float
    delta: float = 0.5
    boundary: str = "free"             # free | fixed-vortex | fixed-uniform
    vortex_charge: int = 1
    seed: int = 9001
    sweeps: int = 200
    burn_in: int = 100
    kernel_p: float = 0.02
    coupling_tail: float = 1e-10

    def __post_init__(self):
        if self.L_side & (self.L_side - 1):
            raise ConfigError("lattice side must be a power of 2")
        if self.boundary not in ("free", "fixed-vortex", "fixed-uniform"):
            raise ConfigError(f"unknown boundary mode {self.boundary!r}")
        rng_len = math.sqrt(2.0 * self.kernel_p)
        if self.gamma * self.L_side < 4.0 * rng_len:
            raise ConfigError("box shorter than four interaction ranges")
        if self.L_side % self.block_side:
            raise ConfigError("block side must divide the lattice side")

    @property
    def gamma(self) -> float:
        return 2.0 ** (-self.k_gamma)

    @property
    def block_side(self) -> int:
        # block of macroscopic side 2^{-n} with gamma^delta ~ 2^{-n}, i.e.
        # gamma^{-(1-delta)} ~ 2^{k-n} sites, snapped to a power of two
        n_coarse = int(math.floor(self.delta * self.k_gamma + 0.5))
        return 2 ** (self.k_gamma - n_coarse)

    @property
    def block_size(self) -> int:
        return self.block_side**2

    @property
    def macroscopic_side(self) -> float:
        return self.gamma * self.L_side


@dataclass(frozen=True)
class CouplingTable:
    """Truncated stencil of J_g with bookkeeping for normalization checks."""

    offsets: np.ndarray       # (K, 2) integer displacements, origin excluded
    values: np.ndarray        # (K,) coupling strengths
    cutoff_sites: int
    self_coupling: float      # J_g(i, i) = g^2 J(0)
    site_norm: float          # sum over the full stencil plus the self term

    @property
    def stencil_size(self) -> int:
        return len(self.values)


def coupling_value(cfg: LatticeConfig, spec: KernelSpec, di: int, dj: int) -> float:
    """J_g between two sites displaced by (di, dj)."""
    g = cfg.gamma
    return float(g * g * spec.radial_profile(np.array([g * math.hypot(di, dj)]))[0])


def build_couplings(cfg: LatticeConfig, spec: KernelSpec) -> CouplingTable:
    """Stencil of J_g truncated where the interaction tail mass drops below
    ``cfg.coupling_tail``; errors out if the cutoff exceeds half the box."""
    g = cfg.gamma
    if spec.kind == "gaussian":
        r_cut = math.sqrt(4.0 * spec.p * math.log(1.0 / cfg.coupling_tail))
    elif spec.kind == "exponential":
        r_cut = spec.p * (cfg.coupling_tail ** (-1.0 / 3.0))  # tail ~ (p/r)^3
    else:
        raise ConfigError("lattice couplings need a closed-form kernel")
    rad = int(math.ceil(r_cut / g))
    if rad > cfg.L_side // 2:
        raise ConfigError(
            f"coupling cutoff {rad} sites exceeds half the box {cfg.L_side // 2}")
    span = np.arange(-rad, rad + 1)
    di, dj = np.meshgrid(span, span, indexing="ij")
    dist = g * np.hypot(di, dj)
    keep = (dist <= r_cut) & ((di != 0) | (dj != 0))
    vals = g * g * spec.radial_profile(dist[keep])
    offs = np.stack([di[keep], dj[keep]], axis=1).astype(np.int64)
    self_c = g * g * float(spec.radial_profile(np.array([0.0]))[0])
    return CouplingTable(offsets=offs, values=np.ascontiguousarray(vals),
                         cutoff_sites=rad, self_coupling=self_c,
                         site_norm=float(vals.sum() + self_c))


def build_couplings_cell_exact(cfg: LatticeConfig, spec: KernelSpec,
                               rad: int) -> dict:
    """Cell-averaged couplings (2x2 midpoints per cell) out to ``rad`` sites.

    Returns a map (di, dj) -> coupling for comparison with the point-sampled
    table; the two agree to O(gamma * grad J).
    """
    g = cfg.gamma
    quarter = np.array([-0.25, 0.25])
    qx, qy = np.meshgrid(quarter, quarter, indexing="ij")
    out = {}
    for di in range(-rad, rad + 1):
        for dj in range(-rad, rad + 1):
            dx = g * (di + qx[..., None, None] - qx[None, None, ...])
            dy = g * (dj + qy[..., None, None] - qy[None, None, ...])
            dist = np.hypot(dx, dy).ravel()
            out[(di, dj)] = g * g * float(np.mean(spec.radial_profile(dist)))
    return out


@dataclass
class SpinField:
    """Lattice configuration: angles plus the frozen-boundary mask."""

    angles: np.ndarray
    frozen: np.ndarray
    config: LatticeConfig

    @property
    def unit_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        return np.cos(self.angles), np.sin(self.angles)


def init_field(cfg: LatticeConfig, couplings: CouplingTable,
               rng: np.random.Generator | None = None) -> SpinField:
    """Fresh field honoring the boundary mode.

    Fixed modes freeze a frame of width equal to the coupling cutoff; the
    vortex frame imposes angles n*atan2(y, x) about the lattice center.
    """
    L = cfg.L_side
    rng = rng or np.random.Generator(np.random.Philox(cfg.seed))
    frozen = np.zeros((L, L), dtype=np.bool_)
    if cfg.boundary != "free":
        b = couplings.cutoff_sites
        frozen[:b, :] = frozen[-b:, :] = True
        frozen[:, :b] = frozen[:, -b:] = True
    if cfg.boundary == "fixed-vortex":
        c = (L - 1) / 2.0
        X, Y = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
        angles = (cfg.vortex_charge * np.arctan2(Y - c, X - c)) % (2.0 * np.pi)
    elif cfg.boundary == "fixed-uniform":
        angles = np.zeros((L, L))
        angles[~frozen] = rng.uniform(0.0, 2.0 * np.pi, size=int((~frozen).sum()))
    else:
        angles = rng.uniform(0.0, 2.0 * np.pi, size=(L, L))
    return SpinField(angles=angles, frozen=frozen, config=cfg)


@njit(cache=True, fastmath=True)
def _sweep_kernel(theta, frozen, offs, vals, beta, width, prop, unif, order):
    L = theta.shape[0]
    K = offs.shape[0]
    acc = 0
    tot = 0
    for idx in range(order.shape[0]):
        s = order[idx]
        i = s // L
        j = s % L
        if frozen[i, j]:
            continue
        hx = 0.0
        hy = 0.0
        for k in range(K):
            ii = i + offs[k, 0]
            jj = j + offs[k, 1]
            if ii < 0 or ii >= L or jj < 0 or jj >= L:
                continue
            t = theta[ii, jj]
            hx += vals[k] * math.cos(t)
            hy += vals[k] * math.sin(t)
        told = theta[i, j]
        tnew = told + width * (2.0 * prop[idx] - 1.0)
        dE = -((math.cos(tnew) - math.cos(told)) * hx
               + (math.sin(tnew) - math.sin(told)) * hy)
        tot += 1
        if dE <= 0.0 or unif[idx] < math.exp(-beta * dE):
            theta[i, j] = tnew % (2.0 * math.pi)
            acc += 1
    return acc, tot


def metropolis_sweep(field: SpinField, couplings: CouplingTable, beta: float,
                     rng: np.random.Generator, width: float = 2.5) -> float:
    """One full pass of single-site proposals; returns the acceptance rate."""
    L = field.config.L_side
    order = rng.permutation(L * L)
    prop = rng.random(L * L)
    unif = rng.random(L * L)
    acc, tot = _sweep_kernel(field.angles, field.frozen, couplings.offsets,
                             couplings.values, beta, width, prop, unif, order)
    return acc / max(tot, 1)


@dataclass
class ChainResult:
    field: SpinField
    acceptance: list
    widths: list
    energies: list
    rng: np.random.Generator


def run_chain(cfg: LatticeConfig, spec: KernelSpec,
              couplings: CouplingTable | None = None,
              sweeps: int | None = None, record_energy_every: int = 0,
              start: SpinField | None = None,
              rng: np.random.Generator | None = None) -> ChainResult:
    """Equilibrate a chain with acceptance-adaptive proposal width (40-60%)."""
    couplings = couplings or build_couplings(cfg, spec)
    rng = rng or np.random.Generator(np.random.Philox(cfg.seed))
    fld = start or init_field(cfg, couplings, rng)
    width = 2.5
    acc_hist, width_hist, energies = [], [], []
    n_sweeps = cfg.sweeps if sweeps is None else sweeps
    for s in range(n_sweeps):
        rate = metropolis_sweep(fld, couplings, cfg.beta, rng, width)
        acc_hist.append(rate)
        width_hist.append(width)
        if rate < 0.4:
            width = max(width * 0.9, 0.02)
        elif rate > 0.6:
            width = min(width * 1.1, np.pi)
        if record_energy_every and (s + 1) % record_energy_every == 0:
            energies.append(hamiltonian(fld, couplings))
    return ChainResult(field=fld, acceptance=acc_hist, widths=width_hist,
                       energies=energies, rng=rng)


@dataclass(frozen=True)
class BlockField:
    """Block-averaged magnetization vectors on the coarse lattice."""

    mx: np.ndarray
    my: np.ndarray
    block_side: int

    @property
    def modulus(self) -> np.ndarray:
        return np.hypot(self.mx, self.my)

    def __post_init__(self):
        if np.any(self.modulus > 1.0 + 1e-12):
            raise ValueError("block magnetization left the unit disc")


def block_spin(field: SpinField, cfg: LatticeConfig | None = None) -> BlockField:
    """Average the unit vectors over blocks of side cfg.block_side."""
    cfg = cfg or field.config
    B = cfg.block_side
    L = field.config.L_side
    if L % B:
        raise ConfigError("block side must divide the lattice side")
    nb = L // B
    cx, cy = field.unit_vectors
    mx = cx.reshape(nb, B, nb, B).mean(axis=(1, 3))
    my = cy.reshape(nb, B, nb, B).mean(axis=(1, 3))
    return BlockField(mx=mx, my=my, block_side=B)


@njit(cache=True, fastmath=True)
def _energy_kernel(sx, sy, frozen, offs, vals):
    L = sx.shape[0]
    K = offs.shape[0]
    total = 0.0
    for i in range(L):
        for j in range(L):
            if frozen[i, j]:
                continue
            for k in range(K):
                ii = i + offs[k, 0]
                jj = j + offs[k, 1]
                if ii < 0 or ii >= L or jj < 0 or jj >= L:
                    continue
                dot = sx[i, j] * sx[ii, jj] + sy[i, j] * sy[ii, jj]
                if frozen[ii, jj]:
                    total -= vals[k] * dot          # boundary term, full weight
                else:
                    total -= 0.5 * vals[k] * dot    # interior pair, halved
    return total


def hamiltonian(field: SpinField, couplings: CouplingTable) -> float:
    """Lattice energy of the unfrozen region given the frozen boundary."""
    sx, sy = field.unit_vectors
    return float(_energy_kernel(sx, sy, field.frozen, couplings.offsets,
                                couplings.values))


def hamiltonian_blocked(field: SpinField, couplings: CouplingTable,
                        cfg: LatticeConfig | None = None,
                        blocks: BlockField | None = None) -> float:
    """Energy with each spin replaced by its block's average vector."""
    cfg = cfg or field.config
    blocks = blocks or block_spin(field, cfg)
    B = blocks.block_side
    sx = np.repeat(np.repeat(blocks.mx, B, axis=0), B, axis=1)
    sy = np.repeat(np.repeat(blocks.my, B, axis=0), B, axis=1)
    return float(_energy_kernel(sx, sy, field.frozen, couplings.offsets,
                                couplings.values))


def intensive_energy(cfg: LatticeConfig, lattice_energy: float) -> float:
    """gamma^d times the lattice energy (the macroscopic density form)."""
    return cfg.gamma**2 * lattice_energy


def nu_density(N: int, m_abs: float, tail_tol: float = 1e-10) -> float:
    """Block-spin density at modulus |m| by characteristic-function quadrature.

    density(m) = (N^2 / 2 pi) int_0^inf J0(N t m) J0(t)^N t dt, normalized so
    that its integral over the unit disc (plain area element) is 1.
    """
    if N < 2:
        raise DomainError("need at least two spins per block")
    if not (0.0 <= m_abs < 1.0):
        raise DomainError("block modulus must lie in [0, 1)")
    if N > 4:
        # envelope (2/pi t)^{N/2} t integrable: solve tail < tol
        expo = N / 2.0 - 2.0
        t_max = max(30.0, ((2.0 / np.pi) ** (N / 2.0) / (expo * tail_tol)) ** (1.0 / expo))
        osc = max(N * m_abs, 1.0)
        t, w = gauss_panels(0.0, t_max, int(np.ceil(2.0 * t_max * osc / np.pi)) + 8, 8)
        val = float(np.sum(w * _sp.j0(N * t * m_abs) * _sp.j0(t) ** N * t))
        return N * N / (2.0 * np.pi) * val
    # N <= 4: slowly decaying oscillatory integral; sum panels between the
    # zeros of the fastest Bessel factor and accelerate the alternating tail
    from .quadrature import alternating_series_limit
    scale = max(N * m_abs, 1.0)
    zeros = _sp.jn_zeros(0, 4000) / scale
    edges = np.concatenate([[0.0], zeros])
    partials = []
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        t, w = gauss_panels(a, b, max(int((b - a) * (N + scale) / 2), 2), 8)
        total += float(np.sum(w * _sp.j0(N * t * m_abs) * _sp.j0(t) ** N * t))
        partials.append(total)
    val = alternating_series_limit(np.array(partials[20:]))
    return N * N / (2.0 * np.pi) * val


def entropy_check(N_list, m_grid) -> dict:
    """Error of (1/N) log nu-density against the negative mean-field entropy.

    Returns e(N, m), the fitted envelope constants (C0, q') in
    (1/N) log [C0 (N/2pi)^2 (N^2 + N^{q'} (1-m)^{-1/2})], and a flag table for
    points skipped because quadrature noise made the density nonpositive.
    """
    table = {}
    skipped = []
    for N in N_list:
        for m in m_grid:
            if m > 0.95:
                raise DomainError("entropy check restricted to |m| <= 0.95")
            dens = nu_density(int(N), float(m))
            if dens <= 0:
                skipped.append((N, m))
                continue
            ent, _ = entropy(m)
            table[(int(N), float(m))] = abs(math.log(dens) / N + ent)
    # smallest C0 per candidate q' that dominates every point; keep the best
    best = None
    for qp in np.linspace(0.0, 4.0, 41):
        c0_needed = 0.0
        for (N, m), e in table.items():
            bound_arg = (N / (2.0 * np.pi)) ** 2 * (N**2 + N**qp * (1.0 - m) ** -0.5)
            c0_needed = max(c0_needed, math.exp(N * e) / bound_arg)
        if best is None or c0_needed < best[0]:
            best = (c0_needed, qp)
    return {"errors": table, "C0": best[0], "q_prime": best[1], "skipped": skipped}


def block_histogram(N: int, n_draws: int, bins: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """Monte Carlo histogram of |block mean| for N independent uniform spins."""
    counts = np.zeros(len(bins) - 1)
    chunk = 200_000
    left = n_draws
    while left > 0:
        take = min(chunk, left)
        theta = rng.uniform(0.0, 2.0 * np.pi, size=(take, N))
        m = np.hypot(np.cos(theta).mean(axis=1), np.sin(theta).mean(axis=1))
        counts += np.histogram(m, bins=bins)[0]
        left -= take
    return counts


def nu_bin_probability(N: int, lo: float, hi: float, n_points: int = 96) -> float:
    """int_lo^hi density(m) 2 pi m dm (probability of the modulus bin)."""
    t, w = gauss_panels(lo, hi, max(n_points // 8, 4), 8)
    vals = np.array([nu_density(N, float(m)) for m in t])
    return float(np.sum(w * vals * 2.0 * np.pi * t))


def lattice_vortex_degree(blocks: BlockField, radius_blocks: float,
                          n_samples: int = 256) -> int:
    """Winding of the block field around a centered circle of block cells."""
    nb = blocks.mx.shape[0]
    c = (nb - 1) / 2.0
    ang = np.linspace(0.0, 2.0 * np.pi, n_samples, endpoint=False)
    ii = np.clip(np.round(c + radius_blocks * np.cos(ang)).astype(int), 0, nb - 1)
    jj = np.clip(np.round(c + radius_blocks * np.sin(ang)).astype(int), 0, nb - 1)
    z = blocks.mx[ii, jj] + 1j * blocks.my[ii, jj]
    if np.any(np.abs(z) <= 0.1):
        raise IllDefinedDegreeError("block modulus dips below 0.1 on the circle")
    return degree(z)


def two_site_reference_distribution(beta: float, pair_coupling: float,
                                    n_bins: int, pin_coupling: float = 0.0,
                                    pin_angle: float = 0.0) -> np.ndarray:
    """Exact stationary bin probabilities of a two-spin system.

    H = -J cos(t1 - t2) - Jp cos(t1 - pin) - Jp cos(t2 - pin); returns the
    (t1, t2) bin masses of e^{-beta H}/Z under the product uniform measure.
    """
    t, w = gauss_panels(0.0, 2.0 * np.pi, 8 * n_bins, 6)
    boltz = np.exp(beta * (pair_coupling * np.cos(t[:, None] - t[None, :])
                           + pin_coupling * np.cos(t - pin_angle)[:, None]
                           + pin_coupling * np.cos(t - pin_angle)[None, :]))
    bin_idx = np.minimum((t / (2.0 * np.pi) * n_bins).astype(int), n_bins - 1)
    prob = np.zeros((n_bins, n_bins))
    weighted = boltz * np.outer(w, w)
    for a in range(n_bins):
        sel_a = bin_idx == a
        for b in range(n_bins):
            prob[a, b] = weighted[np.ix_(sel_a, bin_idx == b)].sum()
    return prob / prob.sum()


def coarse_log_prob_correlation(cfg: LatticeConfig, spec: KernelSpec,
                                ctx: ThermoContext, n_sweeps: int = 40_000,
                                thin: int = 10, angle_bins: int = 4,
                                mod_edges=(0.6,), min_count: int = 25) -> dict:
    """Rank agreement between visit frequencies and the coarse free energy.

    Coarse configurations are quantized per block (angle sector x modulus
    shell); for every quantized class seen often enough the empirical
    log-frequency is compared with -beta gamma^{-2} times the class average
    of H_blocked + I/beta.  Returns the Spearman correlation; additive
    constants (frozen blocks, quantization volume at equal sector sizes)
    drop out of the ranks.
    """
    couplings = build_couplings(cfg, spec)
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    chain = run_chain(cfg, spec, couplings, sweeps=cfg.burn_in, rng=rng)
    fld = chain.field
    B = cfg.block_side
    live_blocks = (~fld.frozen).reshape(
        cfg.L_side // B, B, cfg.L_side // B, B).any(axis=(1, 3)).ravel()
    counts: dict = {}
    f_sums: dict = {}
    width = chain.widths[-1]
    for s in range(n_sweeps):
        rate = metropolis_sweep(fld, couplings, cfg.beta, rng, width)
        if rate < 0.4:
            width = max(width * 0.95, 0.02)
        elif rate > 0.6:
            width = min(width * 1.05, np.pi)
        if (s + 1) % thin:
            continue
        blocks = block_spin(fld, cfg)
        ang = np.floor(((np.arctan2(blocks.my, blocks.mx) + np.pi)
                        / (2.0 * np.pi)) * angle_bins).astype(int) % angle_bins
        shell = np.digitize(blocks.modulus, mod_edges)
        key = (ang * (len(mod_edges) + 1) + shell).tobytes()
        sx = np.repeat(np.repeat(blocks.mx, B, axis=0), B, axis=1)
        sy = np.repeat(np.repeat(blocks.my, B, axis=0), B, axis=1)
        h_int = intensive_energy(cfg, float(_energy_kernel(
            sx, sy, fld.frozen, couplings.offsets, couplings.values)))
        mods = np.clip(blocks.modulus.ravel()[live_blocks], 0.0, 0.999)
        ent = entropy(mods)[0].sum() * cfg.gamma**2 * cfg.block_size
        free = h_int + ent / cfg.beta
        counts[key] = counts.get(key, 0) + 1
        f_sums[key] = f_sums.get(key, 0.0) + free
    log_freq = []
    neg_free = []
    for key, c in counts.items():
        if c < min_count:
            continue
        log_freq.append(math.log(c))
        neg_free.append(-cfg.beta * cfg.gamma**-2 * (f_sums[key] / c))
    rho = _stats.spearmanr(log_freq, neg_free).statistic if len(log_freq) >= 5 else float("nan")
    return {"spearman": float(rho), "classes": len(log_freq),
            "total_samples": sum(counts.values())}
