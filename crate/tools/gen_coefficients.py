#!/usr/bin/env python3
"""Generate molecular Pauli-coefficient tables for the photonvqe crate.

Computes STO-3G integrals from scratch (McMurchie-Davidson scheme), runs a
restricted Hartree-Fock SCF, and performs a small configuration-interaction
calculation:

* H2 / HeH+: full CI with 2 electrons in 2 orbitals, projected onto a
  two-qubit Pauli template (5 terms for H2, 9 for HeH+).
* LiH: CASCI(2,2) on top of a frozen Li-1s core, mapped through Jordan-Wigner
  onto 4 qubits (16-dimensional Hilbert space).

Writes crates/photonvqe/data/{h2,hehplus,lih}.dat. Every row carries the
exact ground-state energy of the emitted operator as a reference value.
"""

import itertools
import os
import numpy as np
from scipy.special import hyp1f1

ANGSTROM_TO_BOHR = 1.8897259886

# STO-3G exponents / contraction coefficients.
STO3G = {
    "H": [("S", [3.425250914, 0.6239137298, 0.1688554040],
           [0.1543289673, 0.5353281423, 0.4446345422])],
    "He": [("S", [6.362421394, 1.158922999, 0.3136497915],
            [0.1543289673, 0.5353281423, 0.4446345422])],
    "Li": [
        ("S", [16.11957475, 2.936200663, 0.7946504870],
         [0.1543289673, 0.5353281423, 0.4446345422]),
        ("S", [0.6362897469, 0.1478600533, 0.0480886784],
         [-0.09996722919, 0.3995128261, 0.7001154689]),
        ("P", [0.6362897469, 0.1478600533, 0.0480886784],
         [0.1559162750, 0.6076837186, 0.3919573931]),
    ],
}

CHARGES = {"H": 1, "He": 2, "Li": 3}


def boys(n, x):
    return hyp1f1(n + 0.5, n + 1.5, -x) / (2.0 * n + 1.0)


def hermite_coefs(l1, l2, a, b, AB):
    """Table E[i][j][t] of 1-D Hermite expansion coefficients."""
    p = a + b
    mu = a * b / p
    E = np.zeros((l1 + 1, l2 + 1, l1 + l2 + 2))
    E[0][0][0] = np.exp(-mu * AB * AB)
    PA = -b * AB / p   # P - A where AB = A - B
    PB = a * AB / p    # P - B
    for i in range(l1 + 1):
        for j in range(l2 + 1):
            if i == 0 and j == 0:
                continue
            for t in range(i + j + 1):
                if i > 0:
                    val = 0.0
                    if t > 0:
                        val += E[i - 1][j][t - 1] / (2 * p)
                    val += PA * E[i - 1][j][t]
                    if t + 1 <= i + j - 1:
                        val += (t + 1) * E[i - 1][j][t + 1]
                    E[i][j][t] = val
                else:
                    val = 0.0
                    if t > 0:
                        val += E[i][j - 1][t - 1] / (2 * p)
                    val += PB * E[i][j - 1][t]
                    if t + 1 <= i + j - 1:
                        val += (t + 1) * E[i][j - 1][t + 1]
                    E[i][j][t] = val
    return E


def overlap_prim(la, A, a, lb, B, b):
    """Primitive overlap; la, lb are (l, m, n) angular momentum triples."""
    p = a + b
    s = (np.pi / p) ** 1.5
    for d in range(3):
        E = hermite_coefs(la[d], lb[d], a, b, A[d] - B[d])
        s *= E[la[d]][lb[d]][0]
    return s


def kinetic_prim(la, A, a, lb, B, b):
    l, m, n = lb

    def S(shift_dim, delta):
        lb2 = list(lb)
        lb2[shift_dim] += delta
        if lb2[shift_dim] < 0:
            return 0.0
        return overlap_prim(la, A, a, tuple(lb2), B, b)

    term0 = b * (2 * (l + m + n) + 3) * overlap_prim(la, A, a, lb, B, b)
    term1 = -2.0 * b * b * (S(0, 2) + S(1, 2) + S(2, 2))
    term2 = -0.5 * (l * (l - 1) * S(0, -2) + m * (m - 1) * S(1, -2) + n * (n - 1) * S(2, -2))
    return term0 + term1 + term2


def hermite_coulomb(t, u, v, n, p, PC, cache):
    key = (t, u, v, n)
    if key in cache:
        return cache[key]
    if t == u == v == 0:
        val = (-2.0 * p) ** n * boys(n, p * np.dot(PC, PC))
    elif t > 0:
        val = PC[0] * hermite_coulomb(t - 1, u, v, n + 1, p, PC, cache)
        if t > 1:
            val += (t - 1) * hermite_coulomb(t - 2, u, v, n + 1, p, PC, cache)
    elif u > 0:
        val = PC[1] * hermite_coulomb(t, u - 1, v, n + 1, p, PC, cache)
        if u > 1:
            val += (u - 1) * hermite_coulomb(t, u - 2, v, n + 1, p, PC, cache)
    else:
        val = PC[2] * hermite_coulomb(t, u, v - 1, n + 1, p, PC, cache)
        if v > 1:
            val += (v - 1) * hermite_coulomb(t, u, v - 2, n + 1, p, PC, cache)
    cache[key] = val
    return val


def nuclear_prim(la, A, a, lb, B, b, C):
    p = a + b
    P = (a * np.asarray(A) + b * np.asarray(B)) / p
    Ex = hermite_coefs(la[0], lb[0], a, b, A[0] - B[0])
    Ey = hermite_coefs(la[1], lb[1], a, b, A[1] - B[1])
    Ez = hermite_coefs(la[2], lb[2], a, b, A[2] - B[2])
    PC = P - np.asarray(C)
    cache = {}
    val = 0.0
    for t in range(la[0] + lb[0] + 1):
        for u in range(la[1] + lb[1] + 1):
            for v in range(la[2] + lb[2] + 1):
                val += (Ex[la[0]][lb[0]][t] * Ey[la[1]][lb[1]][u] * Ez[la[2]][lb[2]][v]
                        * hermite_coulomb(t, u, v, 0, p, PC, cache))
    return 2.0 * np.pi / p * val


def eri_prim(la, A, a, lb, B, b, lc, C, c, ld, D, d):
    p = a + b
    q = c + d
    alpha = p * q / (p + q)
    P = (a * np.asarray(A) + b * np.asarray(B)) / p
    Q = (c * np.asarray(C) + d * np.asarray(D)) / q
    E1 = [hermite_coefs(la[i], lb[i], a, b, A[i] - B[i]) for i in range(3)]
    E2 = [hermite_coefs(lc[i], ld[i], c, d, C[i] - D[i]) for i in range(3)]
    PQ = P - Q
    cache = {}
    val = 0.0
    for t in range(la[0] + lb[0] + 1):
        for u in range(la[1] + lb[1] + 1):
            for v in range(la[2] + lb[2] + 1):
                e1 = E1[0][la[0]][lb[0]][t] * E1[1][la[1]][lb[1]][u] * E1[2][la[2]][lb[2]][v]
                if e1 == 0.0:
                    continue
                for tau in range(lc[0] + ld[0] + 1):
                    for nu in range(lc[1] + ld[1] + 1):
                        for phi in range(lc[2] + ld[2] + 1):
                            e2 = (E2[0][lc[0]][ld[0]][tau] * E2[1][lc[1]][ld[1]][nu]
                                  * E2[2][lc[2]][ld[2]][phi])
                            if e2 == 0.0:
                                continue
                            sign = (-1.0) ** (tau + nu + phi)
                            val += (e1 * e2 * sign
                                    * hermite_coulomb(t + tau, u + nu, v + phi, 0, alpha, PQ, cache))
    return val * 2.0 * np.pi ** 2.5 / (p * q * np.sqrt(p + q))


def prim_norm(l, m, n, a):
    from math import factorial

    def dfact(k):
        return 1 if k <= 0 else np.prod(np.arange(k, 0, -2, dtype=float))

    return ((2 * a / np.pi) ** 0.75 * (4 * a) ** ((l + m + n) / 2.0)
            / np.sqrt(dfact(2 * l - 1) * dfact(2 * m - 1) * dfact(2 * n - 1)))


class Basis:
    """Contracted Cartesian Gaussian basis for a molecule."""

    def __init__(self, atoms):
        # atoms: list of (symbol, xyz in bohr)
        self.atoms = atoms
        self.funcs = []  # (ang triple, center, exps, normalized coeffs)
        for sym, xyz in atoms:
            for shell, exps, coefs in STO3G[sym]:
                if shell == "S":
                    self._add((0, 0, 0), xyz, exps, coefs)
                elif shell == "P":
                    for ang in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
                        self._add(ang, xyz, exps, coefs)

    def _add(self, ang, xyz, exps, coefs):
        l, m, n = ang
        cs = [ci * prim_norm(l, m, n, ai) for ai, ci in zip(exps, coefs)]
        # normalize the contraction numerically
        s = 0.0
        for ai, ci in zip(exps, cs):
            for aj, cj in zip(exps, cs):
                s += ci * cj * overlap_prim(ang, xyz, ai, ang, xyz, aj)
        cs = [ci / np.sqrt(s) for ci in cs]
        self.funcs.append((ang, np.asarray(xyz, dtype=float), exps, cs))

    def nbf(self):
        return len(self.funcs)

    def one_electron(self):
        n = self.nbf()
        S = np.zeros((n, n))
        T = np.zeros((n, n))
        V = np.zeros((n, n))
        for i, (ai, Ai, ei, ci) in enumerate(self.funcs):
            for j, (aj, Aj, ej, cj) in enumerate(self.funcs):
                for a, ca in zip(ei, ci):
                    for b, cb in zip(ej, cj):
                        w = ca * cb
                        S[i, j] += w * overlap_prim(ai, Ai, a, aj, Aj, b)
                        T[i, j] += w * kinetic_prim(ai, Ai, a, aj, Aj, b)
                        for sym, C in self.atoms:
                            V[i, j] -= CHARGES[sym] * w * nuclear_prim(ai, Ai, a, aj, Aj, b, C)
        return S, T, V

    def two_electron(self):
        n = self.nbf()
        eri = np.zeros((n, n, n, n))
        f = self.funcs
        for i, j, k, l in itertools.product(range(n), repeat=4):
            if i < j or k < l or (i, j) < (k, l):
                continue
            val = 0.0
            for a, ca in zip(f[i][2], f[i][3]):
                for b, cb in zip(f[j][2], f[j][3]):
                    for c, cc in zip(f[k][2], f[k][3]):
                        for d, cd in zip(f[l][2], f[l][3]):
                            val += (ca * cb * cc * cd
                                    * eri_prim(f[i][0], f[i][1], a, f[j][0], f[j][1], b,
                                               f[k][0], f[k][1], c, f[l][0], f[l][1], d))
            for p, q in [(i, j), (j, i)]:
                for r, s in [(k, l), (l, k)]:
                    eri[p, q, r, s] = val
                    eri[r, s, p, q] = val
        return eri


def nuclear_repulsion(atoms):
    e = 0.0
    for (s1, r1), (s2, r2) in itertools.combinations(atoms, 2):
        e += CHARGES[s1] * CHARGES[s2] / np.linalg.norm(np.asarray(r1) - np.asarray(r2))
    return e


def rhf(S, h, eri, n_elec, max_iter=200, tol=1e-11):
    n = S.shape[0]
    nocc = n_elec // 2
    evals, evecs = np.linalg.eigh(S)
    X = evecs @ np.diag(evals ** -0.5) @ evecs.T
    D = np.zeros((n, n))
    e_old = 0.0
    for _ in range(max_iter):
        J = np.einsum("pqrs,rs->pq", eri, D)
        K = np.einsum("prqs,rs->pq", eri, D)
        F = h + 2.0 * J - K
        Fp = X.T @ F @ X
        eps, Cp = np.linalg.eigh(Fp)
        C = X @ Cp
        Cocc = C[:, :nocc]
        D = Cocc @ Cocc.T
        e_elec = np.einsum("pq,pq->", D, h + F)
        if abs(e_elec - e_old) < tol:
            break
        e_old = e_elec
    return e_elec, C, eps


def two_orbital_ci(h_mo, eri_mo, e_const):
    """CI matrix for 2 electrons in 2 spatial orbitals.

    Determinant order: D2=|1a 2b>, D1=|1a 1b>, D4=|2a 2b>, D3=|2a 1b>,
    chosen so the qubit basis (00,01,10,11) maps onto (D2, D1, D4, D3).
    """
    h11, h12, h22 = h_mo[0, 0], h_mo[0, 1], h_mo[1, 1]
    J11 = eri_mo[0, 0, 0, 0]
    J22 = eri_mo[1, 1, 1, 1]
    J12 = eri_mo[0, 0, 1, 1]
    K12 = eri_mo[0, 1, 0, 1]
    hp = h12 + eri_mo[0, 1, 0, 0]   # <D1|H|D2> style single excitation
    gp = h12 + eri_mo[0, 1, 1, 1]   # <D2|H|D4> style single excitation
    E1 = 2 * h11 + J11
    E4 = 2 * h22 + J22
    E23 = h11 + h22 + J12
    H = np.zeros((4, 4))
    # order: 00=D2, 01=D1, 10=D4, 11=D3
    H[0, 0], H[1, 1], H[2, 2], H[3, 3] = E23, E1, E4, E23
    H[1, 2] = H[2, 1] = K12          # D1 <-> D4
    H[0, 3] = H[3, 0] = K12          # D2 <-> D3
    H[0, 1] = H[1, 0] = hp           # D2 <-> D1
    H[1, 3] = H[3, 1] = hp           # D1 <-> D3
    H[0, 2] = H[2, 0] = gp           # D2 <-> D4
    H[2, 3] = H[3, 2] = gp           # D4 <-> D3
    return H + e_const * np.eye(4)


PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(string):
    m = PAULIS[string[0]]
    for ch in string[1:]:
        m = np.kron(m, PAULIS[ch])
    return m


def project_onto_template(H, template):
    d = H.shape[0]
    weights = []
    R = H.astype(complex).copy()
    for s in template:
        P = pauli_matrix(s)
        w = np.real_if_close(np.trace(P.conj().T @ H) / d)
        weights.append(float(np.real(w)))
        R -= w * P
    resid = np.max(np.abs(R))
    assert resid < 1e-9, f"template projection residual {resid}"
    return weights


def jordan_wigner_terms(n_modes, coeff, factors):
    """Expand coeff * prod of ladder ops into a dict {pauli_string: coeff}."""
    terms = {"I" * n_modes: complex(coeff)}

    def multiply(terms, op_terms):
        out = {}
        for s1, c1 in terms.items():
            for s2, c2 in op_terms.items():
                phase = 1.0 + 0.0j
                letters = []
                for a, b in zip(s1, s2):
                    ph, p = PAULI_MUL[(a, b)]
                    phase *= ph
                    letters.append(p)
                key = "".join(letters)
                out[key] = out.get(key, 0.0j) + c1 * c2 * phase
        return out

    for mode, dag in factors:
        x = ["I"] * n_modes
        y = ["I"] * n_modes
        for q in range(mode):
            x[q] = "Z"
            y[q] = "Z"
        x[mode] = "X"
        y[mode] = "Y"
        ycoef = -0.5j if dag else 0.5j
        op = {"".join(x): 0.5 + 0.0j, "".join(y): ycoef}
        terms = multiply(terms, op)
    return terms


PAULI_MUL = {}
for a in "IXYZ":
    for b in "IXYZ":
        ma, mb = PAULIS[a], PAULIS[b]
        prod = ma @ mb
        for p in "IXYZ":
            mp = PAULIS[p]
            tr = np.trace(mp.conj().T @ prod) / 2.0
            if abs(tr) > 0.5:
                PAULI_MUL[(a, b)] = (complex(tr), p)
                break


def cas22_pauli_hamiltonian(h_eff, eri_act, e_const):
    """JW Pauli decomposition of a (2e,2o) active-space Hamiltonian.

    Spin-orbital order: (1a, 1b, 2a, 2b) -> qubits 0..3.
    """
    n = 4
    so = [(0, 0), (0, 1), (1, 0), (1, 1)]  # (spatial, spin)
    total = {}

    def acc(terms):
        for s, v in terms.items():
            total[s] = total.get(s, 0.0j) + v

    for p in range(n):
        for q in range(n):
            if so[p][1] != so[q][1]:
                continue
            hpq = h_eff[so[p][0], so[q][0]]
            if abs(hpq) > 1e-14:
                acc(jordan_wigner_terms(n, hpq, [(p, True), (q, False)]))
    for p in range(n):
        for q in range(n):
            for r in range(n):
                for s in range(n):
                    if so[p][1] != so[q][1] or so[r][1] != so[s][1]:
                        continue
                    g = eri_act[so[p][0], so[q][0], so[r][0], so[s][0]]
                    if abs(g) > 1e-14:
                        acc(jordan_wigner_terms(
                            n, 0.5 * g,
                            [(p, True), (r, True), (s, False), (q, False)]))
    total["IIII"] = total.get("IIII", 0.0j) + e_const
    out = {}
    for s, v in total.items():
        assert abs(v.imag) < 1e-10, f"complex weight {s}: {v}"
        if abs(v.real) > 1e-12:
            out[s] = v.real
    return out


def molecule_2q(atoms):
    """Two-orbital FCI Hamiltonian in the qubit basis, plus constants."""
    basis = Basis(atoms)
    S, T, V = basis.one_electron()
    h = T + V
    eri = basis.two_electron()
    e_nuc = nuclear_repulsion(atoms)
    e_elec, C, _ = rhf(S, h, eri, n_elec=2)
    h_mo = C.T @ h @ C
    eri_mo = np.einsum("pi,qj,rk,sl,pqrs->ijkl", C, C, C, C, eri, optimize=True)
    H = two_orbital_ci(h_mo, eri_mo, e_nuc)
    return H, e_elec + e_nuc


def lih_cas22(r_bohr):
    atoms = [("Li", (0.0, 0.0, 0.0)), ("H", (0.0, 0.0, r_bohr))]
    basis = Basis(atoms)
    S, T, V = basis.one_electron()
    h = T + V
    eri = basis.two_electron()
    e_nuc = nuclear_repulsion(atoms)
    e_elec, C, _ = rhf(S, h, eri, n_elec=4)
    h_mo = C.T @ h @ C
    eri_mo = np.einsum("pi,qj,rk,sl,pqrs->ijkl", C, C, C, C, eri, optimize=True)
    core = [0]
    active = [1, 2]
    e_core = sum(2 * h_mo[c, c] for c in core)
    for c1 in core:
        for c2 in core:
            e_core += 2 * eri_mo[c1, c1, c2, c2] - eri_mo[c1, c2, c2, c1]
    na = len(active)
    h_eff = np.zeros((na, na))
    for i, p in enumerate(active):
        for j, q in enumerate(active):
            val = h_mo[p, q]
            for c in core:
                val += 2 * eri_mo[p, q, c, c] - eri_mo[p, c, c, q]
            h_eff[i, j] = val
    eri_act = np.zeros((na, na, na, na))
    for (i, p), (j, q), (k, r), (l, s) in itertools.product(enumerate(active), repeat=4):
        eri_act[i, j, k, l] = eri_mo[p, q, r, s]
    weights = cas22_pauli_hamiltonian(h_eff, eri_act, e_core + e_nuc)
    return weights, e_elec + e_nuc


H2_TEMPLATE = ["II", "IZ", "ZI", "ZZ", "XX"]
HEH_TEMPLATE = ["II", "IZ", "ZI", "ZZ", "XX", "IX", "ZX", "XI", "XZ"]


def emit_2q(path, model, template, atom_builder, lengths):
    lines = [
        f"# model: {model}",
        "# oracle: tools/gen_coefficients.py -- STO-3G McMurchie-Davidson integrals,"
        " RHF, 2-electron/2-orbital full CI",
        "# columns: bond_length_angstrom " + " ".join(f"w({s})" for s in template)
        + " reference_energy_hartree",
    ]
    for r in lengths:
        H, _ = molecule_2q(atom_builder(r * ANGSTROM_TO_BOHR))
        w = project_onto_template(H, template)
        e0 = float(np.linalg.eigvalsh(H)[0])
        lines.append(f"{r:.4f} " + " ".join(f"{x:.12f}" for x in w) + f" {e0:.12f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {path} ({len(lengths)} rows)")


def emit_lih(path, lengths):
    rows = []
    all_strings = None
    for r in lengths:
        weights, e_scf = lih_cas22(r * ANGSTROM_TO_BOHR)
        if all_strings is None:
            all_strings = sorted(weights.keys())
        rows.append((r, weights, e_scf))
    lines = [
        "# model: LiH",
        "# oracle: tools/gen_coefficients.py -- STO-3G McMurchie-Davidson integrals,"
        " RHF, CASCI(2,2) with frozen Li-1s core, Jordan-Wigner on 4 qubits",
        "# strings: " + " ".join(all_strings),
        "# columns: bond_length_angstrom weights... reference_energy_hartree",
    ]
    for r, weights, e_scf in rows:
        d = 16
        H = np.zeros((d, d), dtype=complex)
        for s in all_strings:
            H += weights.get(s, 0.0) * pauli_matrix(s)
        evals = np.linalg.eigvalsh(H)
        e0 = float(evals[0])
        # the physical 2-electron CASCI energy should be the global minimum
        assert e0 < e_scf + 1e-8, f"r={r}: ground {e0} above SCF {e_scf}"
        lines.append(f"{r:.4f} " + " ".join(f"{weights.get(s, 0.0):.12f}" for s in all_strings)
                     + f" {e0:.12f}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {path} ({len(lengths)} rows, {len(all_strings)} Pauli terms)")


def sanity_checks():
    # H2 STO-3G FCI minimum near 0.735 A is a textbook value (~ -1.1373 Ha).
    H, e_scf = molecule_2q([("H", (0, 0, 0)), ("H", (0, 0, 0.735 * ANGSTROM_TO_BOHR))])
    e0 = np.linalg.eigvalsh(H)[0]
    print(f"H2 @0.735A: RHF {e_scf:.6f}  FCI {e0:.6f}")
    assert abs(e_scf - (-1.1167)) < 2e-3, e_scf
    assert abs(e0 - (-1.1373)) < 2e-3, e0

    weights, e_scf = lih_cas22(1.5949 * ANGSTROM_TO_BOHR)
    H = np.zeros((16, 16), dtype=complex)
    for s, w in weights.items():
        H += w * pauli_matrix(s)
    e0 = np.linalg.eigvalsh(H)[0]
    print(f"LiH @1.5949A: RHF {e_scf:.6f}  CASCI(2,2) {e0:.6f}")
    assert abs(e_scf - (-7.862)) < 5e-3, e_scf
    assert e0 < e_scf


def main():
    out_dir = os.path.join(os.path.dirname(__file__), "..", "crates", "photonvqe", "data")
    os.makedirs(out_dir, exist_ok=True)
    sanity_checks()

    h2_lengths = [0.30, 0.40, 0.50, 0.60, 0.70, 0.735, 0.80, 0.90, 1.00,
                  1.20, 1.40, 1.60, 1.80, 2.00, 2.50]
    emit_2q(os.path.join(out_dir, "h2.dat"), "H2", H2_TEMPLATE,
            lambda r: [("H", (0, 0, 0)), ("H", (0, 0, r))], h2_lengths)

    heh_lengths = [0.50, 0.60, 0.70, 0.774, 0.80, 0.90, 1.00, 1.20, 1.50,
                   2.00, 2.50, 3.00]
    emit_2q(os.path.join(out_dir, "hehplus.dat"), "HeH+", HEH_TEMPLATE,
            lambda r: [("He", (0, 0, 0)), ("H", (0, 0, r))], heh_lengths)

    lih_lengths = [1.00, 1.20, 1.40, 1.5949, 1.80, 2.00, 2.40, 3.00]
    emit_lih(os.path.join(out_dir, "lih.dat"), lih_lengths)


if __name__ == "__main__":
    main()
