#!/usr/bin/env python3
"""Convert a UCI musk C4.5 data file (clean1.data / clean2.data) to bag JSONL.

Each input line is one conformation:
    molecule_name,conformation_name,f1,...,f166,class
Conformations sharing a molecule name form one bag; the class column
(1 = musk) is the bag label. Usage:

    python3 scripts/convert_musk_c45.py clean1.data data/musk1.jsonl
"""

import json
import sys
from collections import OrderedDict


def main() -> None:
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    src, dst = sys.argv[1], sys.argv[2]
    bags: "OrderedDict[str, dict]" = OrderedDict()
    with open(src) as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 169:
                raise SystemExit(
                    f"{src}:{line_no}: expected molecule,conformation,166 features,class"
                )
            molecule = parts[0].strip().strip('"')
            features = [float(x) for x in parts[2:168]]
            label = int(float(parts[168]))
            bag = bags.setdefault(molecule, {"label": label, "instances": []})
            if bag["label"] != label:
                raise SystemExit(f"{src}:{line_no}: molecule {molecule} has conflicting labels")
            bag["instances"].append(features)
    with open(dst, "w") as out:
        for molecule, bag in bags.items():
            record = {"id": molecule, "label": bag["label"], "instances": bag["instances"]}
            out.write(json.dumps(record) + "\n")
    positives = sum(1 for b in bags.values() if b["label"] == 1)
    print(f"wrote {len(bags)} bags ({positives} positive) to {dst}")


if __name__ == "__main__":
    main()
