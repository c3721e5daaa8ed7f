#!/usr/bin/env python3
"""Regenerate the bundled synthetic structure corpus under data/corpus/.

The corpus is 12 index entries over 11 PDB-format files (one referenced
file is deliberately absent). Ten entries pass the prep quality filters;
two are rejected (one NOT_FOUND, one INCOMPLETE). Everything is seeded,
so rerunning this script reproduces the shipped files byte for byte.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from contactformer.data import ALPHABET
from contactformer.pdb_io import AA1_TO_3

OUT = Path(__file__).resolve().parents[1] / "data" / "corpus"
STEP = 3.8  # CA-CA spacing in Angstrom


def walk_coords(rng: np.random.Generator, n: int) -> np.ndarray:
    """Compact random CA trace: fixed step, pulled back toward the origin."""
    pos = np.zeros(3)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    coords = [pos.copy()]
    for _ in range(n - 1):
        pull = -0.04 * pos
        direction = 0.6 * direction + rng.normal(size=3) + pull
        direction /= np.linalg.norm(direction)
        pos = pos + STEP * direction
        coords.append(pos.copy())
    return np.round(np.array(coords), 3)


def random_sequence(rng: np.random.Generator, n: int) -> list[str]:
    return [AA1_TO_3[aa] for aa in rng.choice(list(ALPHABET), size=n)]


def atom_line(serial, atom, altloc, res_name, chain, seq_id, icode, xyz,
              element=" C") -> str:
    name = f" {atom:<3s}"[:4]
    x, y, z = xyz
    return (f"ATOM  {serial:5d} {name}{altloc}{res_name:>3s} {chain}{seq_id:4d}"
            f"{icode}   {x:8.3f}{y:8.3f}{z:8.3f}{1.0:6.2f}{0.0:6.2f}"
            f"          {element.strip():>2s}")


def chain_block(rng, chain, n, start_id, skip_ids=(), extra_backbone=False,
                altloc_b_every=0):
    """ATOM lines for one chain; skip_ids are omitted (creates gaps)."""
    coords = walk_coords(rng, n)
    names = random_sequence(rng, n)
    lines = []
    serial = rng.integers(1, 50)
    for i in range(n):
        seq_id = start_id + i
        if seq_id in skip_ids:
            continue
        if extra_backbone:
            lines.append(atom_line(serial, "N", " ", names[i], chain, seq_id, " ",
                                   coords[i] + [0.0, 1.2, 0.4], element=" N"))
            serial += 1
        lines.append(atom_line(serial, "CA", " ", names[i], chain, seq_id, " ", coords[i]))
        serial += 1
        if altloc_b_every and i % altloc_b_every == 0:
            lines.append(atom_line(serial, "CA", "B", names[i], chain, seq_id, " ",
                                   coords[i] + [0.3, 0.0, 0.0]))
            serial += 1
    return lines


def main():
    rng = np.random.default_rng(20240817)
    pdb_dir = OUT / "pdbs"
    pdb_dir.mkdir(parents=True, exist_ok=True)

    files: dict[str, list[str]] = {}
    index_rows = []
    manifest_rows = []

    def add(entry_id, fname, chain, start, end, superfamily, outcome):
        index_rows.append(
            f"{entry_id}\t{fname}\t{chain}\t{start}\t{end}\t{superfamily}")
        manifest_rows.append((entry_id, fname, chain, f"{start}..{end}",
                              superfamily, outcome))

    # --- superfamily sfa: four clean single-chain files ---
    for k, n in enumerate((24, 30, 27, 22)):
        pdb = f"1aa{k}"
        files[pdb] = (["HEADER    SYNTHETIC CORPUS"]
                      + chain_block(rng, "A", n, start_id=1)
                      + ["TER", "END"])
        add(f"{pdb}A", f"{pdb}.pdb", "A", 1, n, "sfa.1.1", "accepted")

    # --- superfamily sfb: quirks the parser must tolerate ---
    # 2ba0: extra backbone atoms besides CA
    files["2ba0"] = (chain_block(rng, "A", 26, start_id=12, extra_backbone=True)
                     + ["TER", "END"])
    add("2ba0A", "2ba0.pdb", "A", 12, 37, "sfb.2.1", "accepted")
    # 2ba1: altloc B duplicates (kept: blank/'A' only) and HETATM waters
    files["2ba1"] = (chain_block(rng, "A", 28, start_id=5, altloc_b_every=7)
                     + ["HETATM 9001  O   HOH A 900      10.000  10.000  10.000"
                        "  1.00  0.00           O",
                        "TER", "END"])
    add("2ba1A", "2ba1.pdb", "A", 5, 32, "sfb.2.1", "accepted")
    # 2ba2: two models; only the first may be read
    first = chain_block(rng, "A", 20, start_id=1)
    second = chain_block(rng, "A", 20, start_id=1)
    files["2ba2"] = (["MODEL        1"] + first + ["ENDMDL", "MODEL        2"]
                     + second + ["ENDMDL", "END"])
    add("2ba2A", "2ba2.pdb", "A", 1, 20, "sfb.2.1", "accepted")

    # --- superfamily sfc: multi-chain file and ranged slices ---
    files["3ca0"] = (chain_block(rng, "A", 25, start_id=1) + ["TER"]
                     + chain_block(rng, "B", 32, start_id=101) + ["TER", "END"])
    add("3ca0A", "3ca0.pdb", "A", 1, 25, "sfc.3.2", "accepted")
    add("3ca0B", "3ca0.pdb", "B", 101, 132, "sfc.3.2", "accepted")
    # 3ca1: a 40-residue chain of which only 140..169 belongs to the entry
    files["3ca1"] = chain_block(rng, "C", 40, start_id=130) + ["TER", "END"]
    add("3ca1C_140-169", "3ca1.pdb", "C", 140, 169, "sfc.3.2", "accepted")

    # --- rejected entries ---
    add("9zz0A", "9zz0.pdb", "A", 1, 25, "sfa.1.1",
        "rejected NOT_FOUND (no such file is shipped)")
    # 9zz1: residues 16-18 missing -> one seq-id gap
    files["9zz1"] = (chain_block(rng, "A", 30, start_id=1, skip_ids=(16, 17, 18))
                     + ["TER", "END"])
    add("9zz1A", "9zz1.pdb", "A", 1, 30, "sfb.2.1",
        "rejected INCOMPLETE (gap at residues 16-18)")

    for pdb, lines in files.items():
        (pdb_dir / f"{pdb}.pdb").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (OUT / "index.tsv").write_text("\n".join(index_rows) + "\n", encoding="utf-8")

    n_ok = sum("accepted" == row[-1] for row in manifest_rows)
    manifest = [
        "# Synthetic structure corpus",
        "",
        "Generated by `scripts/make_corpus.py` (fixed seed); do not edit by hand.",
        f"{len(manifest_rows)} index entries over {len(files)} PDB files: "
        f"{n_ok} pass `contactformer prep`, {len(manifest_rows) - n_ok} are rejected "
        "(one NOT_FOUND, one INCOMPLETE).",
        "",
        "| entry | file | chain | range | superfamily | expected prep outcome |",
        "|-------|------|-------|-------|-------------|-----------------------|",
    ]
    manifest += [
        f"| {e} | {f} | {c} | {r} | {s} | {o} |" for e, f, c, r, s, o in manifest_rows
    ]
    (OUT / "MANIFEST.md").write_text("\n".join(manifest) + "\n", encoding="utf-8")
    print(f"wrote {len(files)} pdb files + index + manifest under {OUT}")


if __name__ == "__main__":
    main()
