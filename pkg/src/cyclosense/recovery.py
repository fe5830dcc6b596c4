"""Structured sparse recovery of shifted slice correlations.

The unknown correlation matrix at each (shift, bin) is nonzero only on a
tridiagonal band (slice self terms) and a tridiagonal anti-band (mirror-image
cross terms). Columns of the reduced operator correspond to kept positions;
positions shared by both bands are collapsed once. Recovery runs a matching
pursuit that, after each pick, tests the picked row's opposite-band partners
and accepts the best one when it buys a real residual drop.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrelationTensor
from .sampler import SensingMatrix

LAYOUT_VERSION = "rowmajor-dedup-1"

__all__ = [
    "LAYOUT_VERSION",
    "SelectionLayout",
    "StructuredOperator",
    "SupportSet",
    "RecoveredSlices",
    "selection_layout",
    "build_operator",
    "complementary_set",
    "structured_omp",
    "ctf_reduce",
    "recover_slices",
    "recover_layer_fine",
    "fine_layer_basis",
    "joint_support",
    "recover_psd",
    "sbr2_bisection",
]

BAND_DIAG = "diag"
BAND_ANTI = "anti"
BAND_BOTH = "both"


@dataclass(frozen=True)
class SelectionLayout:
    """Kept positions of the banded correlation structure.

    Raw slots enumerate the 6N-4 band cells row-major (diagonal band cells of
    a row first, then its anti-band cells, columns ascending). ``dedup_map``
    sends each raw slot to its unique position; positions shared by the two
    bands appear once. All indices into operators are unique-position
    indices.
    """

    n_slices: int
    raw_positions: tuple[tuple[int, int], ...]
    raw_bands: tuple[str, ...]
    dedup_map: tuple[int, ...]
    unique_positions: tuple[tuple[int, int], ...]
    unique_bands: tuple[str, ...]
    version: str = LAYOUT_VERSION

    @property
    def n_raw(self) -> int:
        return len(self.raw_positions)

    @property
    def n_unique(self) -> int:
        return len(self.unique_positions)

    def group_slots(self, group: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Unique indices of row ``group``: (diagonal-band, anti-band)."""
        if not 1 <= group <= self.n_slices:
            raise ValueError("group out of range")
        diag, anti = [], []
        for raw, (r, _) in enumerate(self.raw_positions):
            if r != group:
                continue
            u = self.dedup_map[raw]
            (diag if self.raw_bands[raw] == BAND_DIAG else anti).append(u)
        return tuple(diag), tuple(anti)

    def anti_unique_indices(self) -> tuple[int, ...]:
        """Unique indices of the anti-band cells in row-major order."""
        return tuple(
            self.dedup_map[raw]
            for raw in range(self.n_raw)
            if self.raw_bands[raw] == BAND_ANTI
        )

    def partners(self, unique_index: int) -> tuple[int, ...]:
        """Opposite-band cells of the same row, excluding the cell itself."""
        r, _ = self.unique_positions[unique_index]
        band = self.unique_bands[unique_index]
        diag, anti = self.group_slots(r)
        if band == BAND_DIAG:
            pool: tuple[int, ...] = anti
        elif band == BAND_ANTI:
            pool = diag
        else:
            pool = diag + anti
        return tuple(dict.fromkeys(u for u in pool if u != unique_index))


def selection_layout(n_slices: int, wide_band: bool = False) -> SelectionLayout:
    """Kept band positions; ``wide_band`` adds the r+c = N-1 anti-diagonal.

    The extra diagonal is where mirror-image cross terms of a transmission
    straddling a slice boundary land when the cross product's frequency sum
    wraps one slice low; without it the negative-frequency half of a
    straddler's feature ridge is unrepresentable.
    """
    n = n_slices
    if n < 2:
        raise ValueError("n_slices must be at least 2")
    raw: list[tuple[int, int]] = []
    bands: list[str] = []
    lo = -1 if wide_band else 0
    for r in range(1, n + 1):
        for c in (r - 1, r, r + 1):
            if 1 <= c <= n:
                raw.append((r, c))
                bands.append(BAND_DIAG)
        for c in range(n - r + lo, n - r + 3):
            if 1 <= c <= n:
                raw.append((r, c))
                bands.append(BAND_ANTI)
    assert len(raw) == (7 * n - 6 if wide_band else 6 * n - 4)
    seen: dict[tuple[int, int], int] = {}
    dedup: list[int] = []
    unique: list[tuple[int, int]] = []
    ubands: list[str] = []
    for pos, band in zip(raw, bands):
        if pos in seen:
            u = seen[pos]
            if ubands[u] != band:
                ubands[u] = BAND_BOTH
        else:
            u = seen[pos] = len(unique)
            unique.append(pos)
            ubands.append(band)
        dedup.append(u)
    return SelectionLayout(
        n_slices=n,
        raw_positions=tuple(raw),
        raw_bands=tuple(bands),
        dedup_map=tuple(dedup),
        unique_positions=tuple(unique),
        unique_bands=tuple(ubands),
    )


def complementary_set(group: int, layout: SelectionLayout) -> frozenset[int]:
    """All unique slot indices of a row across both bands.

    Interior rows expose six positions, the first and last rows four; rows
    whose bands overlap (near the center) expose fewer unique ones.
    """
    diag, anti = layout.group_slots(group)
    return frozenset(diag) | frozenset(anti)


@dataclass(frozen=True)
class StructuredOperator:
    """Measurement operator restricted to the kept positions.

    ``phi`` has one column per unique position: kron(conj(a_col), a_row) for
    position (row, col). ``phi1`` covers the main diagonal (slice powers),
    ``phi2`` the anti-band; ``anti_columns`` maps phi2 columns back to phi
    unique indices.
    """

    phi: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    column_norms: np.ndarray
    layout: SelectionLayout
    anti_columns: tuple[int, ...]
    sensing: SensingMatrix
    partner_table: tuple[tuple[int, ...], ...] = field(repr=False, default=())

    @property
    def n_unique(self) -> int:
        return self.phi.shape[1]


def build_operator(sensing: SensingMatrix, layout: SelectionLayout | None = None) -> StructuredOperator:
    if layout is None:
        layout = selection_layout(sensing.n_slices)
    if layout.n_slices != sensing.n_slices:
        raise ValueError("layout and sensing matrix disagree on n_slices")
    a = sensing.a
    m, n = a.shape
    ac = a.conj()
    phi = np.empty((m * m, layout.n_unique), dtype=np.complex128)
    for u, (r, c) in enumerate(layout.unique_positions):
        phi[:, u] = np.kron(ac[:, c - 1], a[:, r - 1])
    phi1 = np.empty((m * m, n), dtype=np.complex128)
    for k in range(n):
        phi1[:, k] = np.kron(ac[:, k], a[:, k])
    anti_cols = layout.anti_unique_indices()
    phi2 = phi[:, list(anti_cols)]
    norms = np.linalg.norm(phi, axis=0)
    if np.any(norms == 0):
        raise ValueError("operator has a zero column; sensing matrix degenerate")
    partner_table = tuple(layout.partners(u) for u in range(layout.n_unique))
    return StructuredOperator(
        phi=phi,
        phi1=phi1,
        phi2=phi2,
        column_norms=norms,
        layout=layout,
        anti_columns=anti_cols,
        sensing=sensing,
        partner_table=partner_table,
    )


@dataclass(frozen=True)
class SupportSet:
    """Recovered unique-position indices plus solver health flags."""

    indices: tuple[int, ...]
    n_slices: int
    version: str = LAYOUT_VERSION
    condition_warning: bool = False
    overflow: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", tuple(sorted(int(i) for i in self.indices)))

    def __len__(self) -> int:
        return len(self.indices)

    def certificate(self, layout: SelectionLayout) -> dict[int, tuple[int, int]]:
        """Per row: (diagonal-band picks, anti-band picks); shared cells
        count on both sides."""
        cert: dict[int, tuple[int, int]] = {}
        for u in self.indices:
            r, _ = layout.unique_positions[u]
            band = layout.unique_bands[u]
            d, a = cert.get(r, (0, 0))
            if band in (BAND_DIAG, BAND_BOTH):
                d += 1
            if band in (BAND_ANTI, BAND_BOTH):
                a += 1
            cert[r] = (d, a)
        return cert

    def satisfies_sigma(self, layout: SelectionLayout) -> bool:
        return all(d <= 1 and a <= 1 for d, a in self.certificate(layout).values())


def _ls(cols: np.ndarray, sel: list[int], v: np.ndarray) -> tuple[np.ndarray, float, bool]:
    mat = cols[:, sel]
    sol, _, rank, _ = np.linalg.lstsq(mat, v, rcond=None)
    resid = v - mat @ sol
    return sol, float(np.sum(np.abs(resid) ** 2)), rank < len(sel)


def _pool_offsets(
    coef: np.ndarray, layout: SelectionLayout, slots: list[int], p: int
) -> np.ndarray:
    """Energy-argmax fine offset per slot from (slot, fine, bin) values.

    Stationary content (and its least-squares crosstalk) sits exactly at
    fine bin zero while the cyclic feature of a random carrier does not, so
    off-diagonal slots skip that bin when more than one window is present.
    """
    energy = np.sum(np.abs(coef) ** 2, axis=2)
    if p > 1:
        off_diag = np.array(
            [layout.unique_positions[u][0] != layout.unique_positions[u][1] for u in slots]
        )
        energy[off_diag, 0] = -1.0
    return np.argmax(energy, axis=1)


def _mirror_neighbor_candidates(
    layout: SelectionLayout, sel: list[int]
) -> dict[int, list[int]]:
    """Unpicked in-band neighbors of selected mirror-pair slots.

    A transmission sitting across a slice boundary spreads one feature over
    adjacent mirror-pair cells; under a tight budget the greedy pass keeps
    the strongest and the rest never accumulate enough residual to win a
    pick. Maps each candidate to the picked slots that name it; whether a
    candidate is genuine is decided later by fine-offset coherence with its
    sponsors.
    """
    pos_index = {layout.unique_positions[u]: u for u in range(layout.n_unique)}
    taken = set(sel)
    out: dict[int, list[int]] = {}
    for u in sel:
        if layout.unique_bands[u] == BAND_DIAG:
            continue
        r, c = layout.unique_positions[u]
        # shifting both slices together keeps the slice-index difference,
        # so only these neighbors share the sponsor's coarse row
        for rc in ((r - 1, c - 1), (r + 1, c + 1)):
            j = pos_index.get(rc)
            if j is not None and j not in taken and layout.unique_bands[j] != BAND_DIAG:
                out.setdefault(j, []).append(u)
    return out


def _omp(
    v: np.ndarray,
    cols: np.ndarray,
    norms: np.ndarray,
    partners: tuple[tuple[int, ...], ...] | None,
    k_max: int,
    eps: float | None = None,
    residual_rtol: float = 1e-6,
    exclude: list[int] | None = None,
) -> tuple[list[int], np.ndarray, bool]:
    """Matching pursuit core; ``partners`` enables the pair-testing step.

    Selection scores use normalized columns; least squares always runs on the
    raw ones. Rank-deficient fits return the minimum-norm solution and set
    the warning flag. The pair-add step may exceed k_max by one entry.
    ``exclude`` bars columns from selection without renumbering the rest.
    """
    vv = v if v.ndim == 2 else v[:, None]
    nrm = float(np.linalg.norm(vv))
    if eps is None:
        eps = 1e-3 * nrm * nrm
    sel: list[int] = []
    coef = np.zeros((0, vv.shape[1]), dtype=np.complex128)
    warn = False
    if nrm == 0.0:
        return sel, coef, warn
    resid = vv.copy()
    active = np.ones(cols.shape[1], dtype=bool)
    if exclude is not None:
        active[exclude] = False
    while len(sel) < k_max and active.any():
        if np.linalg.norm(resid) <= residual_rtol * nrm:
            break
        score = np.sqrt(np.sum(np.abs(cols.conj().T @ resid) ** 2, axis=1)) / norms
        score[~active] = -1.0
        pick = int(np.argmax(score))
        if score[pick] <= 1e-14 * nrm:
            break
        sel.append(pick)
        active[pick] = False
        lam = partners[pick] if partners is not None else ()
        coef, d0, w = _ls(cols, sel, vv)
        warn |= w
        cand = [j for j in lam if active[j]]
        if cand:
            fits = [_ls(cols, sel + [j], vv) for j in cand]
            best = int(np.argmin([f[1] for f in fits]))
            if d0 - fits[best][1] > eps:
                sel.append(cand[best])
                active[cand[best]] = False
                coef, d0, w = _ls(cols, sel, vv)
                warn |= w
        resid = vv - cols[:, sel] @ coef
    return sel, coef, warn


def structured_omp(
    v: np.ndarray,
    op: StructuredOperator,
    k_max: int,
    eps: float | None = None,
) -> tuple[SupportSet, np.ndarray]:
    """Paired pursuit on the full operator.

    ``v`` is one vectorized measurement of length M^2 or a stack of them
    (columns); returns the support and the coefficient array over all unique
    positions (zero off support).
    """
    sel, coef, warn = _omp(v, op.phi, op.column_norms, op.partner_table, k_max, eps)
    width = coef.shape[1]
    full = np.zeros((op.n_unique, width), dtype=np.complex128)
    if sel:
        full[sel] = coef
    if v.ndim == 1:
        full = full[:, 0]
    support = SupportSet(
        indices=tuple(sel),
        n_slices=op.layout.n_slices,
        condition_warning=warn,
    )
    return support, full


def _vec_layer(layer: np.ndarray) -> np.ndarray:
    """(nf, M, M) -> (nf, M^2) with column-stacked matrices."""
    nf, m, _ = layer.shape
    return layer.transpose(0, 2, 1).reshape(nf, m * m)


def _ctf_basis(
    rz: np.ndarray,
    delta_hz: float,
    mode: str,
    gate: float | None,
) -> np.ndarray:
    """Eigen-frame of stacked measurement vectors (rows of ``rz``)."""
    m2 = rz.shape[1]
    if rz.shape[0] == 0:
        return np.zeros((m2, 0), dtype=np.complex128)
    qmat = (rz.T @ rz.conj()) * delta_hz
    qmat = 0.5 * (qmat + qmat.conj().T)
    w, vecs = np.linalg.eigh(qmat)
    lam_max = float(w[-1])
    if lam_max <= 0.0:
        return np.zeros((m2, 0), dtype=np.complex128)
    if gate is None:
        if mode == "noiseless":
            thr = 1e-6 * lam_max
        elif mode == "noisy":
            thr = max(4.0 * float(np.median(w)), 1e-12 * lam_max)
        else:
            raise ValueError("mode must be 'noiseless' or 'noisy'")
    else:
        thr = gate
    keep = w > thr
    return vecs[:, keep] * np.sqrt(w[keep])


def ctf_reduce(
    tensor: CorrelationTensor,
    q_a: int,
    mode: str = "noiseless",
    gate: float | None = None,
) -> np.ndarray:
    """Collapse one shift layer to a finite frame.

    Accumulates sum over bins of r r^H (times the bin width), eigendecomposes
    and keeps sqrt-scaled eigenvectors above the gate. The returned matrix
    spans the same column space as the stacked measurements, so one MMV
    pursuit on it recovers the joint support of the whole layer.
    """
    return _ctf_basis(_vec_layer(tensor.layer(q_a)), tensor.delta_hz, mode, gate)


@dataclass(frozen=True)
class RecoveredSlices:
    """Per-shift recovered correlation coefficients on unique positions.

    ``fine_offsets``, when present, holds per-entry signed cyclic-frequency
    offsets in units of one bin over ``p`` (the dominant fine bin of the
    window-index FFT); ``None`` means everything sits on the coarse grid.
    """

    layers: tuple[np.ndarray, ...]
    supports: tuple[SupportSet, ...]
    f_s_hz: float
    n_slices: int
    q: int
    p: int
    m: int
    fine_offsets: tuple[np.ndarray, ...] | None = None

    @property
    def delta_hz(self) -> float:
        return self.f_s_hz / self.q


def recover_slices(
    tensor: CorrelationTensor,
    op: StructuredOperator,
    k: int,
    mode: str = "noiseless",
) -> RecoveredSlices:
    """Support + least-squares recovery for every shift layer.

    ``k`` is the active-row budget (two rows per transmission). The joint
    pursuit cap is 4k since a straddling transmission can split its energy
    across neighbouring bins within a layer. The zero-shift layer carries the
    stationary (noise-bearing) diagonal, so its pursuit runs on the anti-band
    columns only, without pairing.
    """
    if k < 1:
        raise ValueError("k must be positive")
    k_max = 4 * k
    n_u = op.n_unique
    layers: list[np.ndarray] = []
    supports: list[SupportSet] = []
    for q_a in range(tensor.q + 1):
        layer = tensor.layer(q_a)
        nf = layer.shape[0]
        out = np.zeros((nf, n_u), dtype=np.complex128)
        if nf == 0:
            layers.append(out)
            supports.append(SupportSet((), op.layout.n_slices))
            continue
        basis = ctf_reduce(tensor, q_a, mode)
        if basis.shape[1] == 0:
            layers.append(out)
            supports.append(SupportSet((), op.layout.n_slices))
            continue
        if q_a == 0:
            cols = op.phi2
            norms = np.linalg.norm(cols, axis=0)
            partners = None
        else:
            cols = op.phi
            norms = op.column_norms
            partners = op.partner_table
        sel, _, warn = _omp(basis, cols, norms, partners, k_max)
        if sel:
            rz = _vec_layer(layer)
            sol, _, rank, _ = np.linalg.lstsq(cols[:, sel], rz.T, rcond=None)
            warn |= rank < len(sel)
            uniq = [op.anti_columns[j] for j in sel] if q_a == 0 else sel
            out[:, uniq] = sol.T
        else:
            uniq = []
        layers.append(out)
        supports.append(
            SupportSet(
                indices=tuple(uniq),
                n_slices=op.layout.n_slices,
                condition_warning=warn,
            )
        )
    return RecoveredSlices(
        layers=tuple(layers),
        supports=tuple(supports),
        f_s_hz=tensor.f_s_hz,
        n_slices=op.layout.n_slices,
        q=tensor.q,
        p=tensor.p,
        m=tensor.m,
    )


def recover_layer_fine(
    fine_layer: np.ndarray,
    op: StructuredOperator,
    k: int,
    q_a: int,
    delta_hz: float,
    mode: str = "noiseless",
    allowed: Sequence[int] | None = None,
    basis: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, SupportSet]:
    """Support + least squares for one shift layer at all fine offsets.

    ``fine_layer`` comes from ``cyclic_layer_fft``: shape (P, nf, M, M).
    The pursuit sees every fine bin stacked, so features between coarse
    cyclic bins still drive the support. After least squares each
    (bin, slot) keeps its strongest fine offset: the returned values are
    those peaks, the second array their signed fine bin (units 1/P of one
    coarse bin). Unlike :func:`recover_slices`, the zero-shift layer is
    solved over the full column set: its diagonal slots legitimately carry
    the stationary power spectrum, and restricting the least squares to the
    anti band would smear that energy onto anti slots as artifacts.

    ``allowed``, when given, confines the pursuit (and the straddle
    completion) to that slot set; pass the joint support here to make each
    layer a restricted least-squares refinement instead of a free search.
    ``basis`` short-circuits the eigen-frame computation for nonzero shifts
    when the caller already built it (the zero-shift frame depends on the
    diagonal pre-fit, so it is always computed here).
    """
    if k < 1:
        raise ValueError("k must be positive")
    p, nf, m, _ = fine_layer.shape
    n_u = op.n_unique
    values = np.zeros((nf, n_u), dtype=np.complex128)
    offsets = np.zeros((nf, n_u), dtype=np.int16)
    empty = SupportSet((), op.layout.n_slices)
    if nf == 0:
        return values, offsets, empty
    rz = fine_layer.transpose(0, 1, 3, 2).reshape(p * nf, m * m)
    warn = False
    target = rz.T
    barred: list[int] = []
    if allowed is not None:
        allow = set(int(u) for u in allowed)
        barred = [u for u in range(n_u) if u not in allow]
    frozen: list[int] = []
    frozen_active: list[int] = []
    if q_a == 0:
        # the power-spectrum diagonal is dense, not sparse: every slice that
        # carries anything (signal or noise floor) loads its diagonal slot.
        # Fit that part by least squares first and pursue only the residual;
        # pursuing the raw layer lets the greedy pass spray floor energy
        # over off-diagonal slots, which land at exact multiples of the
        # slice rate on the cyclic-frequency axis as phantom ridges. The
        # diagonal fit stays frozen afterwards: re-fitting it jointly with
        # off-diagonal picks is ill-conditioned and splits the floor energy
        # into large cancelling coefficient pairs.
        frozen = [u for u, (r, c) in enumerate(op.layout.unique_positions) if r == c]
        sol_f, _, rank_f, _ = np.linalg.lstsq(op.phi[:, frozen], target, rcond=None)
        warn |= rank_f < len(frozen)
        target = target - op.phi[:, frozen] @ sol_f
        coef_f = sol_f.reshape(len(frozen), p, nf)
        # stationary content sits at fine bin zero by definition
        values[:, frozen] = coef_f[:, 0, :].T
        e_f = np.sum(np.abs(sol_f) ** 2, axis=1)
        if e_f.size and float(e_f.max()) > 0.0:
            top = float(e_f.max())
            frozen_active = [u for u, e in zip(frozen, e_f) if e > 1e-12 * top]
        basis = _ctf_basis(target.T, delta_hz, mode, None)
        sel: list[int] = []
        if basis.shape[1] > 0:
            cap = min(6 * k, 2 * basis.shape[1])
            sel, _, w = _omp(
                basis,
                op.phi,
                op.column_norms,
                op.partner_table,
                cap,
                exclude=sorted(set(frozen) | set(barred)),
            )
            warn |= w
    else:
        if basis is None:
            basis = _ctf_basis(rz, delta_hz, mode, None)
        if basis.shape[1] == 0:
            return values, offsets, empty
        # a layer cannot support more active slots than twice the number of
        # eigen-directions that survived the gate, so the surplus would only
        # soak up noise. Per active row a layer can host the row's own slots,
        # their mirror transposes, and a boundary-straddling neighbor: 6k.
        cap = min(6 * k, 2 * basis.shape[1])
        sel, _, warn = _omp(
            basis, op.phi, op.column_norms, op.partner_table, cap, exclude=barred or None
        )
    if not sel:
        return values, offsets, SupportSet(
            indices=tuple(sorted(frozen_active)),
            n_slices=op.layout.n_slices,
            condition_warning=warn,
        )
    sol, _, rank, _ = np.linalg.lstsq(op.phi[:, sel], target, rcond=None)
    warn |= rank < len(sel)
    coef = sol.reshape(len(sel), p, nf)
    # one fine offset per slot: a feature advances every bin it occupies by
    # the same per-window phase, while noise maxima are independent per bin,
    # so pooling the offset over bins trades nothing for a lower noise floor
    nu_star = _pool_offsets(coef, op.layout, sel, p)
    picked = np.take_along_axis(coef, nu_star[:, None, None], axis=1)[:, 0, :]
    wrapped = (nu_star + p // 2) % p - p // 2
    uniq = list(sel)
    values[:, uniq] = picked.T
    offsets[:, uniq] = np.broadcast_to(wrapped.astype(np.int16), (nf, len(sel)))
    sponsors = _mirror_neighbor_candidates(op.layout, sel) if p > 1 else {}
    if barred:
        bar = set(barred)
        sponsors = {u: s for u, s in sponsors.items() if u not in bar}
    if sponsors:
        # score candidates against what the fit left unexplained: matched
        # filtering avoids refitting, so a noise neighbor cannot siphon
        # energy from the picked set
        resid = target - op.phi[:, sel] @ sol
        cand = list(sponsors)
        cc = (op.phi[:, cand].conj().T @ resid) / (op.column_norms[cand, None] ** 2)
        ccoef = cc.reshape(len(cand), p, nf)
        cnu = _pool_offsets(ccoef, op.layout, cand, p)
        where = {u: i for i, u in enumerate(sel)}
        kept: list[int] = []
        kept_nu: list[int] = []
        for i, u in enumerate(cand):
            # a straddling feature shares one carrier offset across its
            # cells; a noise slot lands on an arbitrary fine bin
            ok = False
            for s in sponsors[u]:
                ds = abs(int(cnu[i]) - int(nu_star[where[s]]))
                if min(ds, p - ds) <= 1:
                    ok = True
                    break
            if ok:
                kept.append(u)
                kept_nu.append(int(cnu[i]))
        if kept:
            # debias pass: the first least squares absorbed part of each
            # kept slot's energy into its correlated picked columns, so
            # refit jointly over the survivors only (the offset gate has
            # already run, so noise slots cannot ride in on this fit)
            uniq = list(sel) + kept
            sol2, _, rank2, _ = np.linalg.lstsq(op.phi[:, uniq], target, rcond=None)
            warn |= rank2 < len(uniq)
            coef2 = sol2.reshape(len(uniq), p, nf)
            nu_all = np.concatenate([nu_star, np.asarray(kept_nu)])
            picked2 = np.take_along_axis(coef2, nu_all[:, None, None], axis=1)[:, 0, :]
            wrapped2 = (nu_all + p // 2) % p - p // 2
            values[:, uniq] = picked2.T
            offsets[:, uniq] = np.broadcast_to(
                wrapped2.astype(np.int16), (nf, len(uniq))
            )
    return values, offsets, SupportSet(
        indices=tuple(sorted(set(uniq) | set(frozen_active))),
        n_slices=op.layout.n_slices,
        condition_warning=warn,
    )


def fine_layer_basis(
    fine_layer: np.ndarray, delta_hz: float, mode: str = "noiseless"
) -> np.ndarray:
    """Eigen-frame of one fine shift layer, gate set by ``mode``.

    Output is M^2 x r; r = 0 means the layer holds nothing above the gate.
    """
    p, nf, m, _ = fine_layer.shape
    rz = fine_layer.transpose(0, 1, 3, 2).reshape(p * nf, m * m)
    return _ctf_basis(rz, delta_hz, mode, None)


def joint_support(
    bases: Sequence[np.ndarray | None],
    op: StructuredOperator,
    k: int,
) -> SupportSet:
    """One support decision for all nonzero shifts at once.

    Concatenates the per-shift eigen-frames into a single multi-measurement
    target and runs the structured pursuit once over it, so every shift's
    energy votes on the same slot set. Diagonal-band slots are barred: the
    cyclic features of interest live on the anti band, while the diagonal
    band carries the stationary part that the zero-shift solve handles.

    The pick budget is 8k slots: each occupied slice row, counting both
    frequency signs, can engage its own anti slot, the transpose, and the
    two straddle neighbors.
    """
    cols = [b for b in bases if b is not None and b.shape[1] > 0]
    n = op.layout.n_slices
    if not cols:
        return SupportSet((), n)
    joint = np.concatenate(cols, axis=1)
    anti = set(op.layout.anti_unique_indices)
    barred = [u for u in range(op.n_unique) if u not in anti]
    cap = min(8 * k, op.n_unique - len(barred), 2 * joint.shape[1])
    sel, _, warn = _omp(
        joint, op.phi, op.column_norms, op.partner_table, cap, exclude=barred
    )
    return SupportSet(tuple(sel), n, condition_warning=warn)


def recover_psd(
    tensor: CorrelationTensor,
    op: StructuredOperator,
    sparse_k: int | None = None,
) -> np.ndarray:
    """Slice power spectrum from the zero-shift layer, shape (Q, N).

    Default solves the full least-squares system on the diagonal columns (the
    stationary-model special case). ``sparse_k`` instead restricts to a
    support of that many slices found by plain pursuit, which is the
    historical energy-detection baseline; under a strong noise floor the
    sparsity premise is wrong and the baseline degrades accordingly.
    """
    rz = _vec_layer(tensor.layer(0))
    n = op.phi1.shape[1]
    if sparse_k is None:
        sol, _, _, _ = np.linalg.lstsq(op.phi1, rz.T, rcond=None)
        return sol.T
    basis = ctf_reduce(tensor, 0, mode="noisy")
    out = np.zeros((rz.shape[0], n), dtype=np.complex128)
    if basis.shape[1] == 0:
        return out
    norms = np.linalg.norm(op.phi1, axis=0)
    sel, _, _ = _omp(basis, op.phi1, norms, None, sparse_k)
    if sel:
        sol, _, _, _ = np.linalg.lstsq(op.phi1[:, sel], rz.T, rcond=None)
        out[:, sel] = sol.T
    return out


def sbr2_bisection(
    tensor: CorrelationTensor,
    op: StructuredOperator,
    k: int,
    depth_max: int,
    q_a: int | None = None,
    mode: str = "noiseless",
) -> SupportSet:
    """Bisect the bin interval until each piece yields a support within 2k.

    A transmission pair occupying disjoint bin ranges can inflate the joint
    support of a whole layer; halving the range separates them. Returns the
    union over pieces (and over all shifts when ``q_a`` is None); the
    overflow flag reports a piece that still exceeded 2k at full depth.
    """
    if depth_max < 0:
        raise ValueError("depth_max must be non-negative")

    def solve_range(qa: int, lo: int, hi: int) -> list[int]:
        basis = _ctf_basis(_vec_layer(tensor.layer(qa)[lo:hi]), tensor.delta_hz, mode, None)
        if basis.shape[1] == 0:
            return []
        if qa == 0:
            sel, _, _ = _omp(basis, op.phi2, np.linalg.norm(op.phi2, axis=0), None, 4 * k)
            return [op.anti_columns[j] for j in sel]
        sel, _, _ = _omp(basis, op.phi, op.column_norms, op.partner_table, 4 * k)
        return sel

    overflow = False

    def recurse(qa: int, lo: int, hi: int, depth: int) -> set[int]:
        nonlocal overflow
        found = set(solve_range(qa, lo, hi))
        if len(found) <= 2 * k:
            return found
        if depth <= 0 or hi - lo < 2:
            overflow = True
            return found
        mid = (lo + hi) // 2
        return recurse(qa, lo, mid, depth - 1) | recurse(qa, mid, hi, depth - 1)

    shifts = range(tensor.q + 1) if q_a is None else [q_a]
    union: set[int] = set()
    for qa in shifts:
        nf = tensor.q - qa
        if nf > 0:
            union |= recurse(qa, 0, nf, depth_max)
    return SupportSet(
        indices=tuple(union),
        n_slices=op.layout.n_slices,
        overflow=overflow,
    )
