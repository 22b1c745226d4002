"""Write a synthetic chest/head/hand family and its index files for desk-scale runs."""
import argparse
import json
from pathlib import Path

from lmbench import synthetic
from lmbench.datasets import ingest


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out", type=Path)
    p.add_argument("--train", type=int, default=12)
    p.add_argument("--test", type=int, default=4)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    made = synthetic.make_family(args.out / "data", args.train, args.test, args.size, args.seed)
    sources = {}
    for name, (root, spec) in made.items():
        path = ingest(root, spec).save(args.out / f"{name}.index.json")
        sources[name] = {"index": str(path.resolve())}
        print(f"{name}: {spec.train_count} train / {spec.test_count} test, K={spec.landmark_count} -> {path}")
    (args.out / "datasets.json").write_text(json.dumps(sources, indent=2))


if __name__ == "__main__":
    main()
