"""Structure ingestion: canonical JSON-lines records, SDF/PDB readers, atom features.

The canonical on-disk format is JSON lines, one complex per line, with every
per-atom annotation explicit (see ``record_to_json_line``). SDF V2000 plus PDB
input is supported as a convenience path that derives the same annotations
from the file contents; chemistry perception beyond that (protonation,
aromaticity detection, sanitization) is out of scope.

Feature encoding, per atom, is a 56-wide binary row: columns 0-27 are the
ligand block, 28-55 the protein block, and only the block matching the atom's
side is populated. Each 28-block is [element one-hot (10) | degree 0-5 (6) |
attached hydrogens 0-4 (5) | implicit valence 0-5 (6) | aromatic flag (1)].
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, ParseError

SCHEMA_VERSION = 1

ELEMENTS = ("C", "N", "O", "S", "F", "P", "Cl", "Br", "B", "H")
_ELEMENT_INDEX = {e: i for i, e in enumerate(ELEMENTS)}

BOND_ORDERS = ("single", "double", "triple", "aromatic")
_ORDER_VALENCE = {"single": 1.0, "double": 2.0, "triple": 3.0, "aromatic": 1.5}

CATEGORIES = (
    "dude_active",
    "dude_inactive",
    "pdbbind_positive",
    "pdbbind_negative",
    "unlabeled",
)
CATEGORY_LABELS = {
    "dude_active": 1,
    "dude_inactive": 0,
    "pdbbind_positive": 1,
    "pdbbind_negative": 0,
}

# Single-bond covalent radii in angstroms, used for inferring protein bonds.
COVALENT_RADII = {
    "H": 0.31,
    "B": 0.84,
    "C": 0.76,
    "N": 0.71,
    "O": 0.66,
    "F": 0.57,
    "P": 1.07,
    "S": 1.05,
    "Cl": 1.02,
    "Br": 1.20,
}
BOND_INFERENCE_FACTOR = 1.3

# Typical valence used when deriving implicit valence from explicit bonds.
STANDARD_VALENCE = {
    "C": 4,
    "N": 3,
    "O": 2,
    "S": 2,
    "F": 1,
    "P": 3,
    "Cl": 1,
    "Br": 1,
    "B": 3,
    "H": 1,
}

# Feature block layout (widths of the one-hot groups inside a 28-block).
N_FEATURES = 56
_BLOCK = 28
_DEGREE_MAX = 5
_NUM_H_MAX = 4
_VALENCE_MAX = 5


@dataclass
class Atom:
    element: str
    position: tuple[float, float, float]
    is_ligand: bool
    degree: int
    num_hydrogens: int
    implicit_valence: int
    aromatic: bool


@dataclass
class Bond:
    i: int
    j: int
    order: str = "single"


@dataclass
class ComplexRecord:
    """A validated, annotated protein-ligand complex."""

    complex_id: str
    protein_id: str
    atoms: list[Atom]
    bonds: list[Bond]
    category: str = "unlabeled"
    label: int | None = None
    rmsd: float | None = None

    def __post_init__(self):
        validate_record(self)

    @property
    def num_ligand_atoms(self) -> int:
        return sum(1 for a in self.atoms if a.is_ligand)

    @property
    def num_protein_atoms(self) -> int:
        return len(self.atoms) - self.num_ligand_atoms

    def coordinates(self) -> np.ndarray:
        return np.array([a.position for a in self.atoms], dtype=np.float64)

    def effective_label(self) -> int | None:
        if self.label is not None:
            return self.label
        return CATEGORY_LABELS.get(self.category)


def validate_record(rec: ComplexRecord) -> None:
    n = len(rec.atoms)
    n_lig = sum(1 for a in rec.atoms if a.is_ligand)
    if n_lig == 0:
        raise DataError(f"{rec.complex_id}: complex has no ligand atoms")
    if n_lig == n:
        raise DataError(f"{rec.complex_id}: complex has no protein atoms")
    for idx, atom in enumerate(rec.atoms):
        if atom.element not in _ELEMENT_INDEX:
            raise DataError(f"{rec.complex_id}: atom {idx} has unsupported element {atom.element!r}")
        if len(atom.position) != 3 or not all(math.isfinite(c) for c in atom.position):
            raise DataError(f"{rec.complex_id}: atom {idx} has a non-finite position")
        if min(atom.degree, atom.num_hydrogens, atom.implicit_valence) < 0:
            raise DataError(f"{rec.complex_id}: atom {idx} has a negative annotation")
    for bond in rec.bonds:
        if bond.i == bond.j:
            raise DataError(f"{rec.complex_id}: bond joins atom {bond.i} to itself")
        if not (0 <= bond.i < n and 0 <= bond.j < n):
            raise DataError(f"{rec.complex_id}: bond ({bond.i},{bond.j}) out of range")
        if rec.atoms[bond.i].is_ligand != rec.atoms[bond.j].is_ligand:
            raise DataError(
                f"{rec.complex_id}: covalent bond ({bond.i},{bond.j}) crosses the "
                "ligand/protein boundary"
            )
        if bond.order not in _ORDER_VALENCE:
            raise DataError(f"{rec.complex_id}: unknown bond order {bond.order!r}")
    if rec.category not in CATEGORIES:
        raise DataError(f"{rec.complex_id}: unknown category {rec.category!r}")
    if rec.label is not None and rec.label not in (0, 1):
        raise DataError(f"{rec.complex_id}: label must be 0 or 1, got {rec.label!r}")
    expected = CATEGORY_LABELS.get(rec.category)
    if rec.label is not None and expected is not None and rec.label != expected:
        raise DataError(
            f"{rec.complex_id}: label {rec.label} contradicts category {rec.category}"
        )
    if rec.rmsd is not None and (not math.isfinite(rec.rmsd) or rec.rmsd < 0):
        raise DataError(f"{rec.complex_id}: rmsd must be a finite non-negative number")


def ligand_first(rec: ComplexRecord) -> ComplexRecord:
    """Reorder atoms so every ligand atom precedes every protein atom.

    Relative order within each side is preserved; bonds are remapped. Already
    ordered records are returned unchanged (idempotent).
    """
    order = [i for i, a in enumerate(rec.atoms) if a.is_ligand]
    order += [i for i, a in enumerate(rec.atoms) if not a.is_ligand]
    if order == list(range(len(rec.atoms))):
        return rec
    remap = {old: new for new, old in enumerate(order)}
    atoms = [rec.atoms[i] for i in order]
    bonds = [Bond(remap[b.i], remap[b.j], b.order) for b in rec.bonds]
    return replace(rec, atoms=atoms, bonds=bonds)


# ---------------------------------------------------------------------------
# Featurization
# ---------------------------------------------------------------------------

def atom_feature_row(atom: Atom, stats: dict | None = None) -> np.ndarray:
    """56-wide binary feature row for one atom.

    Out-of-range degree/hydrogen/valence annotations clamp to the last one-hot
    slot; clamps are tallied in ``stats['clamped_annotations']`` when given.
    """
    row = np.zeros(N_FEATURES, dtype=np.float64)
    offset = 0 if atom.is_ligand else _BLOCK

    def clamp(value, limit):
        if value > limit:
            if stats is not None:
                stats["clamped_annotations"] = stats.get("clamped_annotations", 0) + 1
            return limit
        return value

    row[offset + _ELEMENT_INDEX[atom.element]] = 1.0
    row[offset + 10 + clamp(atom.degree, _DEGREE_MAX)] = 1.0
    row[offset + 16 + clamp(atom.num_hydrogens, _NUM_H_MAX)] = 1.0
    row[offset + 21 + clamp(atom.implicit_valence, _VALENCE_MAX)] = 1.0
    if atom.aromatic:
        row[offset + 27] = 1.0
    return row


def featurize(rec: ComplexRecord, stats: dict | None = None) -> np.ndarray:
    """N x 56 feature matrix, ligand atoms first then protein atoms."""
    ordered = ligand_first(rec)
    return np.stack([atom_feature_row(a, stats) for a in ordered.atoms])


# ---------------------------------------------------------------------------
# Canonical JSON lines
# ---------------------------------------------------------------------------

def record_to_json_line(rec: ComplexRecord) -> str:
    """Serialize one record to its canonical single-line JSON form."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "complex_id": rec.complex_id,
        "protein_id": rec.protein_id,
        "category": rec.category,
        "label": rec.label,
        "rmsd": rec.rmsd,
        "atoms": [
            {
                "element": a.element,
                "position": list(a.position),
                "is_ligand": a.is_ligand,
                "degree": a.degree,
                "num_hydrogens": a.num_hydrogens,
                "implicit_valence": a.implicit_valence,
                "aromatic": a.aromatic,
            }
            for a in rec.atoms
        ],
        "bonds": [{"i": b.i, "j": b.j, "order": b.order} for b in rec.bonds],
    }
    return json.dumps(doc, separators=(",", ":"))


def record_from_json_line(line: str, path=None, lineno: int | None = None) -> ComplexRecord:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", path=path, line=lineno) from exc
    try:
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ParseError(f"unsupported schema_version {version!r}", path=path, line=lineno)
        atoms = [
            Atom(
                element=str(a["element"]),
                position=tuple(float(c) for c in a["position"]),
                is_ligand=bool(a["is_ligand"]),
                degree=int(a["degree"]),
                num_hydrogens=int(a["num_hydrogens"]),
                implicit_valence=int(a["implicit_valence"]),
                aromatic=bool(a["aromatic"]),
            )
            for a in doc["atoms"]
        ]
        bonds = [Bond(int(b["i"]), int(b["j"]), str(b["order"])) for b in doc["bonds"]]
        return ComplexRecord(
            complex_id=str(doc["complex_id"]),
            protein_id=str(doc["protein_id"]),
            atoms=atoms,
            bonds=bonds,
            category=str(doc.get("category", "unlabeled")),
            label=None if doc.get("label") is None else int(doc["label"]),
            rmsd=None if doc.get("rmsd") is None else float(doc["rmsd"]),
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed record ({exc})", path=path, line=lineno) from exc


def read_jsonl(path) -> list[ComplexRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(record_from_json_line(line, path=path, lineno=lineno))
    return records


def write_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_to_json_line(rec))
            fh.write("\n")


# ---------------------------------------------------------------------------
# SDF V2000 (ligand)
# ---------------------------------------------------------------------------

def parse_sdf_ligand(path, stats: dict | None = None):
    """Read the first molecule of a V2000 molfile.

    Columns consumed: counts line [0:3]=natoms [3:6]=nbonds; atom block
    [0:10]=x [10:20]=y [20:30]=z [31:34]=symbol; bond block [0:3]=i [3:6]=j
    [6:9]=type (1/2/3 and 4 for aromatic). Atoms with elements outside the
    supported set are dropped (counted in ``stats['dropped_atoms']``) along
    with their bonds; annotations are derived from the surviving graph.

    Returns ``(atoms, bonds)`` with atoms marked ``is_ligand=True``.
    """
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 4:
        raise ParseError("molfile too short for a V2000 header", path=path, line=len(lines))
    counts_line = lines[3]
    try:
        n_atoms = int(counts_line[0:3])
        n_bonds = int(counts_line[3:6])
    except ValueError as exc:
        raise ParseError("bad counts line", path=path, line=4) from exc
    if len(lines) < 4 + n_atoms + n_bonds:
        raise ParseError(
            f"molfile truncated: expected {n_atoms} atoms and {n_bonds} bonds",
            path=path,
            line=len(lines),
        )

    raw_atoms = []
    for k in range(n_atoms):
        lineno = 5 + k
        line = lines[4 + k]
        try:
            x = float(line[0:10])
            y = float(line[10:20])
            z = float(line[20:30])
            symbol = line[31:34].strip()
        except (ValueError, IndexError) as exc:
            raise ParseError("bad atom line", path=path, line=lineno) from exc
        raw_atoms.append((symbol, (x, y, z)))

    raw_bonds = []
    for k in range(n_bonds):
        lineno = 5 + n_atoms + k
        line = lines[4 + n_atoms + k]
        try:
            i = int(line[0:3]) - 1
            j = int(line[3:6]) - 1
            btype = int(line[6:9])
        except (ValueError, IndexError) as exc:
            raise ParseError("bad bond line", path=path, line=lineno) from exc
        if not (0 <= i < n_atoms and 0 <= j < n_atoms) or i == j:
            raise ParseError(f"bond endpoints out of range ({i + 1},{j + 1})", path=path, line=lineno)
        order = {1: "single", 2: "double", 3: "triple", 4: "aromatic"}.get(btype)
        if order is None:
            raise ParseError(f"unsupported bond type {btype}", path=path, line=lineno)
        raw_bonds.append((i, j, order))

    return _assemble_side(raw_atoms, raw_bonds, is_ligand=True, stats=stats)


# ---------------------------------------------------------------------------
# PDB (protein)
# ---------------------------------------------------------------------------

def parse_pdb_protein(path, stats: dict | None = None):
    """Read protein atoms from PDB ATOM/HETATM records.

    Columns consumed (0-indexed): [0:6]=record name, [12:16]=atom name,
    [16]=altLoc, [30:38]/[38:46]/[46:54]=x/y/z, [76:78]=element symbol.
    When the element columns are blank the first alphabetic character of the
    atom name is used. Alternate locations other than '' or 'A' are skipped.

    Covalent bonds are inferred between atom pairs closer than
    ``1.3 x (sum of single-bond covalent radii)``; all inferred bonds are
    single order and aromatic flags stay false.
    """
    raw_atoms = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            record = line[0:6].strip()
            if record not in ("ATOM", "HETATM"):
                continue
            if len(line) < 54:
                raise ParseError("truncated coordinate record", path=path, line=lineno)
            altloc = line[16:17]
            if altloc not in (" ", "", "A"):
                continue
            try:
                x = float(line[30:38])
                y = float(line[38:46])
                z = float(line[46:54])
            except ValueError as exc:
                raise ParseError("bad coordinates", path=path, line=lineno) from exc
            element = line[76:78].strip() if len(line) >= 78 else ""
            if not element:
                name = line[12:16].strip()
                letters = [c for c in name if c.isalpha()]
                element = letters[0] if letters else ""
            element = element.capitalize()
            raw_atoms.append((element, (x, y, z)))

    kept, bonds = _infer_bonds(raw_atoms, stats=stats)
    return _assemble_side(kept, bonds, is_ligand=False, stats=None)


def _infer_bonds(raw_atoms, stats: dict | None = None):
    kept = []
    for symbol, pos in raw_atoms:
        if symbol in _ELEMENT_INDEX:
            kept.append((symbol, pos))
        elif stats is not None:
            stats["dropped_atoms"] = stats.get("dropped_atoms", 0) + 1
    if not kept:
        return kept, []
    coords = np.array([pos for _, pos in kept])
    radii = np.array([COVALENT_RADII[sym] for sym, _ in kept])
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    cutoff = BOND_INFERENCE_FACTOR * (radii[:, None] + radii[None, :])
    ii, jj = np.nonzero(np.triu(dist < cutoff, k=1))
    bonds = [(int(i), int(j), "single") for i, j in zip(ii, jj)]
    return kept, bonds


def _assemble_side(raw_atoms, raw_bonds, is_ligand: bool, stats: dict | None):
    """Drop unsupported elements, remap bonds, derive per-atom annotations."""
    keep_map = {}
    kept = []
    for idx, (symbol, pos) in enumerate(raw_atoms):
        if symbol in _ELEMENT_INDEX:
            keep_map[idx] = len(kept)
            kept.append((symbol, pos))
        elif stats is not None:
            stats["dropped_atoms"] = stats.get("dropped_atoms", 0) + 1

    bonds = []
    for i, j, order in raw_bonds:
        if i in keep_map and j in keep_map:
            bonds.append(Bond(keep_map[i], keep_map[j], order))

    degree = [0] * len(kept)
    num_h = [0] * len(kept)
    valence_used = [0.0] * len(kept)
    aromatic = [False] * len(kept)
    for b in bonds:
        for end, other in ((b.i, b.j), (b.j, b.i)):
            degree[end] += 1
            valence_used[end] += _ORDER_VALENCE[b.order]
            if kept[other][0] == "H":
                num_h[end] += 1
            if b.order == "aromatic":
                aromatic[end] = True

    atoms = []
    for idx, (symbol, pos) in enumerate(kept):
        implicit = max(0, math.floor(STANDARD_VALENCE[symbol] - valence_used[idx]))
        atoms.append(
            Atom(
                element=symbol,
                position=tuple(float(c) for c in pos),
                is_ligand=is_ligand,
                degree=degree[idx],
                num_hydrogens=num_h[idx],
                implicit_valence=implicit,
                aromatic=aromatic[idx],
            )
        )
    return atoms, bonds


# ---------------------------------------------------------------------------
# Combined entry point
# ---------------------------------------------------------------------------

def parse_complex(
    path,
    fmt: str = "jsonl",
    protein_path=None,
    complex_id: str | None = None,
    protein_id: str | None = None,
    category: str = "unlabeled",
    label: int | None = None,
    rmsd: float | None = None,
    stats: dict | None = None,
) -> ComplexRecord:
    """Parse a single complex.

    ``fmt='jsonl'`` reads the first record of a canonical JSON-lines file.
    ``fmt='sdf+pdb'`` reads the ligand from ``path`` (SDF V2000) and the
    protein from ``protein_path``; identifiers default to the file stems.
    """
    if fmt == "jsonl":
        records = read_jsonl(path)
        if not records:
            raise ParseError("no records in file", path=path, line=1)
        return records[0]
    if fmt == "sdf+pdb":
        if protein_path is None:
            raise ValueError("sdf+pdb format requires protein_path")
        lig_atoms, lig_bonds = parse_sdf_ligand(path, stats=stats)
        prot_atoms, prot_bonds = parse_pdb_protein(protein_path, stats=stats)
        if not lig_atoms:
            raise DataError(f"{path}: no supported ligand atoms after filtering")
        if not prot_atoms:
            raise DataError(f"{protein_path}: no supported protein atoms after filtering")
        offset = len(lig_atoms)
        bonds = list(lig_bonds) + [Bond(b.i + offset, b.j + offset, b.order) for b in prot_bonds]
        cid = complex_id or os.path.splitext(os.path.basename(str(path)))[0]
        pid = protein_id or os.path.splitext(os.path.basename(str(protein_path)))[0]
        return ComplexRecord(
            complex_id=cid,
            protein_id=pid,
            atoms=lig_atoms + prot_atoms,
            bonds=bonds,
            category=category,
            label=label,
            rmsd=rmsd,
        )
    raise ValueError(f"unknown format {fmt!r} (expected 'jsonl' or 'sdf+pdb')")
