"""Run the model grid and the transfer chains on a synthetic family, then render all tables."""
import argparse
import json
from pathlib import Path

from lmbench.cli import main as cli


def run(cmd, cfg: dict, out: Path, force: bool):
    path = out / f"{cmd}.json"
    path.write_text(json.dumps(cfg, indent=2))
    code = cli([cmd, "--config", str(path), "--out", str(out)] + (["--force"] if force else []))
    if code:
        raise SystemExit(code)


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("workdir", type=Path, help="output of make_synthetic.py")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--force", action="store_true")
    args = p.parse_args()

    datasets = json.loads((args.workdir / "datasets.json").read_text())
    out = args.workdir / "results"
    out.mkdir(exist_ok=True)
    train = {"epochs": args.epochs, "train_resolution": f"{args.size}x{args.size}", "sigma": 3.0, "lr_init": 1e-3,
             "cache_images": True}
    light = {"architecture": "unet", "encoder": "resnet18", "pretrained": "none"}
    run("crossval", {"datasets": datasets, "target": "hand", "model": light, "train": train, "folds": 3,
                     "grid": [{"architecture": a, "encoder": "resnet18"} for a in ("unet", "unetpp", "deeplabv3")]},
        out, args.force)
    run("chain", {"datasets": datasets, "model": light, "train": train,
                  "chains": {"targets": ["chest", "head", "hand"], "max_stages": 3, "reuse_intermediate": True}},
        out, args.force)
    for tmpl in ("table1", "table2", "table3"):
        cli(["report", "--store", str(out / "results.jsonl"), "--template", tmpl, "--out", str(out / "reports")])


if __name__ == "__main__":
    main()
