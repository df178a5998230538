#!/usr/bin/env python3
"""Capture reference-toolkit descriptor values into the test fixtures.

Run once with RDKit installed; the outputs are committed and the Rust tests
never call back into Python.

    python3 tools/capture_oracle.py <rdkit-data-root> <out-dir>
"""
import csv
import random
import sys
from pathlib import Path

from rdkit import Chem, RDLogger
from rdkit.Chem import QED, Crippen, rdMolDescriptors as rdmd

RDLogger.DisableLog("rdApp.*")

ALLOWED = {1, 5, 6, 7, 8, 9, 15, 16, 17, 35, 53}


def sources(root: Path):
    yield from (l.split()[0] for l in open(root / "Data/NCI/first_5K.smi") if l.strip())
    with open(root / "Data/Pains/test_data/wehi_mols.csv") as fh:
        for row in csv.reader(fh):
            yield row[0]
    for name in ["Contrib/FreeWilson/data/CHEMBL2321810.smi",
                 "Contrib/fraggle/data/ChEMBL_11265_actives.smi"]:
        yield from (l.split()[0] for l in open(root / name) if l.strip())


def clean(smi):
    mol = Chem.MolFromSmiles(smi)
    if mol is None:
        return None
    frags = Chem.GetMolFrags(mol, asMols=True)
    mol = max(frags, key=lambda m: m.GetNumHeavyAtoms())
    if any(a.GetAtomicNum() not in ALLOWED for a in mol.GetAtoms()):
        return None
    if any(a.GetNumRadicalElectrons() for a in mol.GetAtoms()):
        return None
    if not 6 <= mol.GetNumHeavyAtoms() <= 60:
        return None
    Chem.RemoveStereochemistry(mol)
    out = Chem.MolToSmiles(mol, isomericSmiles=False)
    return out if Chem.MolFromSmiles(out) is not None else None


def oracle(smi):
    mol = Chem.MolFromSmiles(smi)
    props = QED.properties(mol)
    return {
        "smiles": smi,
        "logp": round(Crippen.MolLogP(mol), 6),
        "tpsa": round(rdmd.CalcTPSA(mol), 6),
        "qed": round(QED.qed(mol), 6),
        "mw": round(props.MW, 6),
        "hba": props.HBA,
        "hbd": props.HBD,
        "rotb": props.ROTB,
        "arom": props.AROM,
        "alerts": props.ALERTS,
    }


def write_tsv(path, rows):
    with open(path, "w") as fh:
        keys = list(rows[0])
        fh.write("\t".join(keys) + "\n")
        for r in rows:
            fh.write("\t".join(str(r[k]) for k in keys) + "\n")


def main():
    root, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    seen, pool = set(), []
    for smi in sources(root):
        c = clean(smi)
        if c and c not in seen:
            seen.add(c)
            pool.append(c)
    rng = random.Random(20250101)
    rng.shuffle(pool)
    print(f"pool: {len(pool)}", file=sys.stderr)
    (out / "screening_10k.smi").write_text("\n".join(pool[:10000]) + "\n")
    (out / "druglike_1k.smi").write_text("\n".join(pool[10000:11000]) + "\n")
    write_tsv(out / "descriptor_oracle.tsv", [oracle(s) for s in pool[11000:11200]])
    if len(sys.argv) > 3:
        write_tsv(Path(sys.argv[3]), [oracle(s) for s in pool])


if __name__ == "__main__":
    main()
