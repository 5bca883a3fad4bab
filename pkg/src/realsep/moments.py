"""Moment relaxation of the real-separable maximum of the witness.

For every outcome ``b`` of the central measurement a moment matrix ``G_b`` is
indexed by products ``u v`` of an A-word ``u`` (length <= n_A) and a C-word
``v`` (length <= n_C); its entries are ``omega_b(u^T u' v^T v')``.  Letters are
dichotomic (``X^2 = 1``) and A-letters commute with C-letters, so a moment is
keyed by a pair of reduced words.

Constraints:

* every ``G_b`` is real symmetric PSD (moments invariant under reversing both
  words at once);
* ``sum_b omega_b(1) = 1``;
* separability in real Hilbert space: the outcome-summed matrix equals its
  partial transpose on the A-index, i.e. ``sum_b omega_b(a, c) =
  sum_b omega_b(reverse(a), c)``.  Optionally the same identity per outcome.

The objective is ``sum_{b,x,z} sign[b][x] f[x][z] omega_b(A_x C_z)``.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import sdp

logger = logging.getLogger(__name__)

Letter = tuple[str, int]
Word = tuple[Letter, ...]
Key = tuple[tuple[int, ...], tuple[int, ...]]

SUPPORTED_LEVELS = (1, 2, 3)


# ---------------------------------------------------------------------------
# words


def _reduce(letters) -> tuple:
    """Cancel adjacent equal letters to a fixed point (free product of Z2's)."""
    stack = []
    for a in letters:
        if stack and stack[-1] == a:
            stack.pop()
        else:
            stack.append(a)
    return tuple(stack)


def canonicalize(word) -> Word:
    """Canonical form of a word in the letters ``("A", x)`` and ``("C", z)``.

    C-letters are moved past A-letters (the parties commute) keeping the order
    inside each alphabet, then squares are cancelled.

    >>> canonicalize([("C", 2), ("A", 1)])
    (('A', 1), ('C', 2))
    >>> canonicalize([("A", 1), ("A", 2), ("A", 2), ("C", 1), ("C", 1)])
    (('A', 1),)
    """
    letters = [tuple(l) for l in word]
    for party, idx in letters:
        if party not in ("A", "C") or not isinstance(idx, (int, np.integer)) or idx < 1:
            raise ValueError(f"invalid letter {(party, idx)!r}")
    a = _reduce(l for l in letters if l[0] == "A")
    c = _reduce(l for l in letters if l[0] == "C")
    return a + c


def word_str(word) -> str:
    return "".join(f"{p}{i}" for p, i in word) or "1"


def parse_word(text: str) -> Word:
    """Inverse of :func:`word_str` (``"A1C2"`` -> ``(("A",1),("C",2))``)."""
    if text == "1":
        return ()
    out = []
    pos = 0
    while pos < len(text):
        party = text[pos]
        end = pos + 1
        while end < len(text) and text[end].isdigit():
            end += 1
        if party not in "AC" or end == pos + 1:
            raise ValueError(f"cannot parse word {text!r}")
        out.append((party, int(text[pos + 1:end])))
        pos = end
    return tuple(out)


def reduced_words(n_letters: int, max_len: int) -> list[tuple[int, ...]]:
    """All reduced words of length <= max_len over letters 0..n_letters-1."""
    out = [()]
    frontier = [()]
    for _ in range(max_len):
        frontier = [w + (a,) for w in frontier for a in range(n_letters) if not w or w[-1] != a]
        out.extend(frontier)
    return out


def _key(a: tuple, c: tuple) -> Key:
    """Moment key, identified under simultaneous reversal (real symmetry)."""
    k = (a, c)
    r = (a[::-1], c[::-1])
    return k if k <= r else r


@dataclass(frozen=True)
class RelaxationLevel:
    n_A: int = 2
    n_C: int = 2

    def __post_init__(self):
        for v in (self.n_A, self.n_C):
            if v not in SUPPORTED_LEVELS:
                raise ValueError(f"relaxation level {v} unsupported (choose from {SUPPORTED_LEVELS})")


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class MomentProblem:
    f: np.ndarray
    sign: np.ndarray
    level: RelaxationLevel
    per_block_ppt: bool
    index: list[tuple[tuple[int, ...], tuple[int, ...]]]
    keys: list[Key]
    entry_key: np.ndarray
    equalities: list[tuple[dict[int, float], float, str]]
    objective: np.ndarray
    n_blocks: int = 4

    @property
    def n_keys(self) -> int:
        return len(self.keys)

    @property
    def n_vars(self) -> int:
        return self.n_blocks * self.n_keys

    def var(self, b: int, key: Key) -> int:
        return b * self.n_keys + self._key_id[key]

    def __post_init__(self):
        self._key_id = {k: i for i, k in enumerate(self.keys)}

    def key_of(self, aword, cword) -> Key:
        return _key(_reduce(aword), _reduce(cword))

    def moment_matrix(self, y: np.ndarray, b: int) -> np.ndarray:
        """``G_b`` for full variable vector ``y``."""
        return y[b * self.n_keys + self.entry_key]

    def to_sdp(self, symmetry: str = "auto") -> "ReducedProblem":
        """Standard-form SDP, reduced by parity and optionally by instance symmetry.

        ``symmetry`` is ``"auto"`` (detect relabelings leaving the objective
        invariant), ``"parity"`` (only the global A,C -> -A,-C flip, valid for
        every instance) or ``"none"``.
        """
        return _reduce_problem(self, symmetry)

    def to_dict(self) -> dict:
        return {
            "format": "realsep-moment-problem",
            "version": 1,
            "f": self.f.tolist(),
            "sign": self.sign.tolist(),
            "level": [self.level.n_A, self.level.n_C],
            "per_block_ppt": self.per_block_ppt,
            "index": [word_str(_letters(a, c)) for a, c in self.index],
            "keys": [word_str(_letters(a, c)) for a, c in self.keys],
            "entry_key": self.entry_key.tolist(),
            "equalities": [{"coeffs": {str(k): v for k, v in d.items()}, "rhs": r, "kind": kind}
                           for d, r, kind in self.equalities],
            "objective": {str(i): float(v) for i, v in enumerate(self.objective) if v != 0},
        }


def _letters(a, c) -> Word:
    return tuple(("A", x + 1) for x in a) + tuple(("C", z + 1) for z in c)


def build_moment_problem(f, sign, level: RelaxationLevel = RelaxationLevel(),
                         per_block_ppt: bool = False, uniform_outcomes: bool = False,
                         max_index: int = 2000) -> MomentProblem:
    """Assemble the moment relaxation for witness matrix ``f`` and sign table.

    ``per_block_ppt`` additionally imposes the partial-transpose identity for
    each outcome separately.  ``uniform_outcomes`` pins ``omega_b(1) = 1/4``.
    """
    f = np.asarray(f, dtype=float)
    sign = np.asarray(sign, dtype=float)
    if f.ndim != 2 or f.shape[0] != 3:
        raise ValueError("f must have 3 rows")
    if sign.shape != (4, 3):
        raise ValueError("sign table must be 4x3")
    nz = f.shape[1]
    awords = reduced_words(3, level.n_A)
    cwords = reduced_words(nz, level.n_C)
    index = [(u, v) for u in awords for v in cwords]
    n = len(index)
    if n > max_index:
        raise ValueError(f"moment matrix index of size {n} exceeds guard {max_index}")

    aprod = {(u, u2): _reduce(u[::-1] + u2) for u in awords for u2 in awords}
    cprod = {(v, v2): _reduce(v[::-1] + v2) for v in cwords for v2 in cwords}
    key_id: dict[Key, int] = {}
    entry_key = np.empty((n, n), dtype=np.int64)
    for i, (u, v) in enumerate(index):
        for j in range(i, n):
            u2, v2 = index[j]
            k = _key(aprod[u, u2], cprod[v, v2])
            kid = key_id.setdefault(k, len(key_id))
            entry_key[i, j] = entry_key[j, i] = kid
    keys = list(key_id)
    m = len(keys)

    eqs: list[tuple[dict[int, float], float, str]] = []
    e0 = key_id[((), ())]
    eqs.append(({b * m + e0: 1.0 for b in range(4)}, 1.0, "normalization"))
    if uniform_outcomes:
        for b in range(4):
            eqs.append(({b * m + e0: 1.0}, 0.25, f"p(b={b})"))
    seen = set()
    for k, i in key_id.items():
        j = key_id.get(_key(k[0][::-1], k[1]))
        if j is None:
            raise AssertionError("word set not closed under partial transpose")
        if i == j or (min(i, j), max(i, j)) in seen:
            continue
        seen.add((min(i, j), max(i, j)))
        label = "ppt:" + word_str(_letters(*k))
        if per_block_ppt:
            for b in range(4):
                eqs.append(({b * m + i: 1.0, b * m + j: -1.0}, 0.0, f"{label}|b={b}"))
        else:
            d = {}
            for b in range(4):
                d[b * m + i] = 1.0
                d[b * m + j] = -1.0
            eqs.append((d, 0.0, label))

    obj = np.zeros(4 * m)
    for b in range(4):
        for x in range(3):
            for z in range(nz):
                obj[b * m + key_id[_key((x,), (z,))]] += sign[b, x] * f[x, z]

    return MomentProblem(f=f, sign=sign, level=level, per_block_ppt=per_block_ppt,
                         index=index, keys=keys, entry_key=entry_key, equalities=eqs,
                         objective=obj)


# ---------------------------------------------------------------------------
# symmetry reduction


@dataclass
class Symmetry:
    """Relabeling ``b -> outcome[b]``, ``A_x -> a_sign[x] A_{a_perm[x]}``, same for C."""

    outcome: tuple[int, ...]
    a_perm: tuple[int, ...]
    c_perm: tuple[int, ...]
    a_sign: tuple[int, ...]
    c_sign: tuple[int, ...]


def find_symmetries(f, sign, tol: float = 1e-12) -> list[Symmetry]:
    """All relabelings of outcomes, settings and setting signs fixing the objective.

    The constraint set is invariant under each of them, so the optimum can be
    sought among invariant moment assignments.
    """
    f = np.asarray(f, dtype=float)
    sign = np.asarray(sign, dtype=float)
    nz = f.shape[1]
    g = sign[:, :, None] * f[None, :, :]
    scale = tol * max(1.0, np.max(np.abs(g)))
    s_all = np.array(list(itertools.product((1, -1), repeat=3)))
    t_all = np.array(list(itertools.product((1, -1), repeat=nz)))
    out = []
    for ap in itertools.permutations(range(3)):
        for cp in itertools.permutations(range(nz)):
            # h[s, t, bb] = s_x t_z g[bb][ap[x]][cp[z]], compared with g[b]
            gp = g[:, list(ap)][:, :, list(cp)]
            h = gp[None, None] * s_all[:, None, None, :, None] * t_all[None, :, None, None, :]
            dist = np.max(np.abs(h[:, :, :, None] - g[None, None, None]), axis=(-2, -1))
            match = dist <= scale                       # (s, t, bb, b)
            ok = match.any(axis=2).all(axis=2)
            for si, ti in zip(*np.nonzero(ok)):
                options = [np.flatnonzero(match[si, ti, :, b]).tolist() for b in range(4)]
                for beta in itertools.product(*options):
                    if len(set(beta)) == 4:
                        out.append(Symmetry(tuple(beta), ap, cp, tuple(int(v) for v in s_all[si]),
                                            tuple(int(v) for v in t_all[ti])))
    return out


@dataclass
class ReducedProblem:
    """An :class:`sdp.SdpInstance` together with the map back to full moments."""

    instance: sdp.SdpInstance
    expand: sp.csr_matrix            # full moments = expand @ reduced
    block_labels: list[tuple[int, int]]
    n_symmetries: int

    def full_moments(self, y_red: np.ndarray) -> np.ndarray:
        return self.expand @ y_red


def _reduce_problem(mp: MomentProblem, symmetry: str) -> ReducedProblem:
    if symmetry not in ("auto", "parity", "none"):
        raise ValueError(f"unknown symmetry mode {symmetry!r}")
    nz = mp.f.shape[1]
    m = mp.n_keys
    nvar = mp.n_vars
    if symmetry == "none":
        group = [Symmetry((0, 1, 2, 3), (0, 1, 2), tuple(range(nz)), (1,) * 3, (1,) * nz)]
    elif symmetry == "parity":
        group = [Symmetry((0, 1, 2, 3), (0, 1, 2), tuple(range(nz)), (1,) * 3, (1,) * nz),
                 Symmetry((0, 1, 2, 3), (0, 1, 2), tuple(range(nz)), (-1,) * 3, (-1,) * nz)]
    else:
        group = find_symmetries(mp.f, mp.sign)

    # letter relabelings act on words; tabulate word images once per element
    awords = reduced_words(3, 2 * mp.level.n_A)
    cwords = reduced_words(nz, 2 * mp.level.n_C)
    aid = {w: i for i, w in enumerate(awords)}
    cid = {w: i for i, w in enumerate(cwords)}
    table = np.full((len(awords), len(cwords)), -1, dtype=np.int64)
    ka = np.empty(m, dtype=np.int64)
    kc = np.empty(m, dtype=np.int64)
    for kid, (a, c) in enumerate(mp.keys):
        ka[kid], kc[kid] = aid[a], cid[c]
        table[aid[a], cid[c]] = kid
        table[aid[a[::-1]], cid[c[::-1]]] = kid
    blk_of = np.repeat(np.arange(4), m)
    img = np.empty((len(group), nvar), dtype=np.int64)
    sgn = np.empty((len(group), nvar))
    for gi, gsym in enumerate(group):
        pa = np.array([aid[tuple(gsym.a_perm[x] for x in w)] for w in awords])
        pc = np.array([cid[tuple(gsym.c_perm[z] for z in w)] for w in cwords])
        sa = np.array([np.prod([gsym.a_sign[x] for x in w]) for w in awords])
        sc = np.array([np.prod([gsym.c_sign[z] for z in w]) for w in cwords])
        kimg = table[pa[ka], pc[kc]]
        if np.any(kimg < 0):
            raise AssertionError("key set not closed under the symmetry")
        img[gi] = np.asarray(gsym.outcome)[blk_of] * m + np.tile(kimg, 4)
        sgn[gi] = np.tile(sa[ka] * sc[kc], 4)

    # a variable mapped to minus itself by some element vanishes; otherwise it
    # equals +-(its smallest orbit member)
    zero = np.any((img == np.arange(nvar)[None, :]) & (sgn < 0), axis=0)
    arg = np.argmin(img, axis=0)
    rep = img[arg, np.arange(nvar)]
    rep_sign = sgn[arg, np.arange(nvar)]
    rep[zero] = -1
    reps = np.unique(rep[rep >= 0])
    red_of = np.full(nvar, -1, dtype=np.int64)
    red_of[rep >= 0] = np.searchsorted(reps, rep[rep >= 0])
    rows = np.flatnonzero(rep >= 0)
    T = sp.csr_matrix((rep_sign[rows], (rows, red_of[rows])), shape=(nvar, len(reps)))

    # representative outcome blocks
    block_reps = sorted({int(img[:, b * m].min()) // m for b in range(4)})
    # the global flip A, C -> -A, -C makes odd moments vanish, so each block
    # splits by word parity; without it the blocks stay whole
    flip = any(g.outcome == (0, 1, 2, 3) and g.a_perm == (0, 1, 2)
               and g.c_perm == tuple(range(nz)) and set(g.a_sign) == {-1}
               and set(g.c_sign) == {-1} for g in group)
    par = np.array([(len(a) + len(c)) % 2 if flip else 0 for a, c in mp.index])
    blocks = []
    labels = []
    for b in block_reps:
        for p in (0, 1):
            sel = np.flatnonzero(par == p)
            if len(sel) == 0:
                continue
            sub = mp.entry_key[np.ix_(sel, sel)]
            iu, ju = np.triu_indices(len(sel))
            full = b * m + sub[iu, ju]
            keep = rep[full] >= 0
            blocks.append(sdp.SdpBlock(dim=len(sel), var=red_of[full[keep]], row=iu[keep],
                                       col=ju[keep], val=rep_sign[full[keep]]))
            labels.append((b, p))

    er, ec, ev, rhs = [], [], [], []
    for t, (d, r, _) in enumerate(mp.equalities):
        for vv, coef in d.items():
            er.append(t)
            ec.append(vv)
            ev.append(coef)
        rhs.append(r)
    Efull = sp.csr_matrix((ev, (er, ec)), shape=(len(mp.equalities), nvar))
    E = (Efull @ T).tocsr()
    E.eliminate_zeros()
    E.data[np.abs(E.data) < 1e-14] = 0
    E.eliminate_zeros()
    obj = T.T @ mp.objective
    inst = sdp.SdpInstance(blocks=blocks, n_vars=len(reps), objective=obj,
                           eq_matrix=E, eq_rhs=np.array(rhs), maximize=True)
    return ReducedProblem(instance=inst, expand=T, block_labels=labels, n_symmetries=len(group))


# ---------------------------------------------------------------------------
# solving


@dataclass
class RealBound:
    value: float
    status: str
    gap: float
    rel_gap: float
    certified_upper_bound: float
    level: RelaxationLevel
    per_block_ppt: bool
    verification: sdp.Verification
    solution: sdp.SdpSolution = field(repr=False)
    reduced: ReducedProblem = field(repr=False)
    problem: MomentProblem = field(repr=False)

    def moments(self) -> np.ndarray:
        return self.reduced.full_moments(self.solution.y)

    def certificate(self) -> dict:
        """Dual certificate: PSD multipliers per reduced block and equality multipliers."""
        return {
            "blocks": [{"outcome": b, "parity": p, "X": X.tolist()}
                       for (b, p), X in zip(self.reduced.block_labels, self.solution.X)],
            "equality_multipliers": self.solution.lam.tolist(),
            "dual_objective": self.solution.dual_obj,
        }

    def summary(self) -> dict:
        return {
            "F_r": self.value,
            "status": self.status,
            "gap": self.gap,
            "rel_gap": self.rel_gap,
            "certified_upper_bound": self.certified_upper_bound,
            "level": [self.level.n_A, self.level.n_C],
            "per_block_ppt": self.per_block_ppt,
            "iterations": self.solution.iterations,
            "seconds": self.solution.seconds,
            "verified": self.verification.ok,
        }


class SolverFailure(RuntimeError):
    def __init__(self, message: str, result: RealBound):
        super().__init__(message)
        self.result = result


def certified_bound(red: ReducedProblem, sol: sdp.SdpSolution) -> float:
    """Rigorous upper bound from the dual point, absorbing its residuals.

    Every moment is bounded by 1 in absolute value and each outcome block has
    trace ``dim * omega_b(1)``, so stationarity residuals and negative
    eigenvalues of the multipliers can only raise the bound by the amounts added
    here.
    """
    inst = red.instance
    st = inst.adjoint(sol.X) - inst.eq_matrix.T @ sol.lam + inst.objective
    # reduced variables are signed sums of moments: |y_red| <= 1
    bound = float(inst.eq_rhs @ sol.lam) + float(np.sum(np.abs(st)))
    for blk, X in zip(inst.blocks, sol.X):
        ev = np.linalg.eigvalsh(0.5 * (X + X.T))[0]
        if ev < 0:
            bound += -ev * blk.dim
    return bound


def real_bound(f, sign, level: RelaxationLevel = RelaxationLevel(), per_block_ppt: bool = False,
               symmetry: str = "auto", tol: sdp.Tolerances | None = None,
               uniform_outcomes: bool = False, raise_on_failure: bool = True) -> RealBound:
    """Upper bound on the witness over real-separable quantum models."""
    mp = build_moment_problem(f, sign, level, per_block_ppt=per_block_ppt,
                              uniform_outcomes=uniform_outcomes)
    red = mp.to_sdp(symmetry)
    sol = sdp.solve(red.instance, tol)
    ver = sdp.verify(red.instance, sol, tol)
    res = RealBound(value=sol.primal_obj, status=sol.status, gap=sol.gap, rel_gap=sol.rel_gap,
                    certified_upper_bound=certified_bound(red, sol), level=level,
                    per_block_ppt=per_block_ppt, verification=ver, solution=sol, reduced=red,
                    problem=mp)
    logger.info("real bound %.9f (%s, %d its, %.1fs)", res.value, sol.status,
                sol.iterations, sol.seconds)
    if raise_on_failure and sol.status not in (sdp.OPTIMAL,):
        raise SolverFailure(f"SDP solver returned status {sol.status}", res)
    return res


def export_problem(mp: MomentProblem, path, symmetry: str = "parity") -> None:
    """Write the assembled SDP in the package's JSON standard form."""
    red = mp.to_sdp(symmetry)
    doc = red.instance.to_dict()
    doc["moment_problem"] = {
        "level": [mp.level.n_A, mp.level.n_C],
        "per_block_ppt": mp.per_block_ppt,
        "symmetry": symmetry,
        "block_labels": red.block_labels,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
