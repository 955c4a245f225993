"""Convert the classic Cora release (cora.content + cora.cites) into the
package's dataset formats.

Usage:
    python scripts/convert_cora.py /path/to/cora_dir /path/to/out_dir

`cora.content` lines are `<paper_id> <w1..wD> <class_name>`; `cora.cites`
lines are `<cited> <citing>`. Nodes are numbered in content order and
class names map to ids alphabetically, so the conversion is deterministic.
Point IMBNODE_CORA_DIR at the output directory to activate the
real-dataset acceptance test.
"""
import sys
from pathlib import Path


def main(src: Path, dst: Path) -> None:
    ids = []
    rows = []
    names = []
    with open(src / "cora.content", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            ids.append(parts[0])
            rows.append(parts[1:-1])
            names.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    class_ids = {name: i for i, name in enumerate(sorted(set(names)))}

    dst.mkdir(parents=True, exist_ok=True)
    with open(dst / "features.txt", "w", encoding="utf-8") as fh:
        fh.write(f"{len(rows)} {len(rows[0])}\n")
        for row in rows:
            fh.write(" ".join(row) + "\n")
    with open(dst / "labels.txt", "w", encoding="utf-8") as fh:
        for name in names:
            fh.write(f"{class_ids[name]}\n")
    skipped = 0
    with open(src / "cora.cites", encoding="utf-8") as fh, open(
        dst / "edges.tsv", "w", encoding="utf-8"
    ) as out:
        for line in fh:
            a, b = line.split()
            if a in index and b in index:
                out.write(f"{index[a]}\t{index[b]}\n")
            else:
                skipped += 1
    print(f"{len(rows)} nodes, {len(class_ids)} classes -> {dst}")
    if skipped:
        print(f"skipped {skipped} citations referencing unknown papers")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    main(Path(sys.argv[1]), Path(sys.argv[2]))
