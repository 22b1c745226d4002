"""Overfit 8 synthetic images (4 landmarks, 128 px, sigma 3) as a pipeline smoke test."""
import argparse
import tempfile
import time

from lmbench import synthetic
from lmbench.datasets import ingest
from lmbench.evaluation import evaluate
from lmbench.models import ModelSpec, build
from lmbench.train import LandmarkDataset, TrainConfig, fit, seed_everything


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--arch", default="unet")
    p.add_argument("--encoder", default="resnet18")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        spec = synthetic.synthetic_spec("chest", 10, 2, 128, landmarks=4)
        idx = ingest(synthetic.make_dataset(tmp, spec, seed=args.seed), spec)
        train_ids, val_ids = idx.train_ids[:8], idx.train_ids[8:]
        cfg = TrainConfig(epochs=args.epochs, lr_init=args.lr, sigma=3.0, train_resolution="128x128",
                          cache_images=True, early_stop_patience=10**6, scheduler_patience=10**6, seed=args.seed)
        tr = LandmarkDataset(idx.select(train_ids), cfg.resolution, cfg.sigma, None, True)
        va = LandmarkDataset(idx.select(val_ids), cfg.resolution, cfg.sigma, None, True)
        seed_everything(args.seed)
        model = build(ModelSpec(args.arch, args.encoder, "none", 4))
        t0 = time.perf_counter()
        rec = fit(model, tr, va, cfg, on_epoch=lambda r: print(
            f"epoch {r['epoch']:3d} train {r['train_loss']:.5f} val {r['val_loss']:.5f}") if r["epoch"] % 10 == 0
            else None)
        rep = evaluate(model, idx, ids=train_ids)
        ratio = rec.curve[-1]["train_loss"] / rec.curve[0]["train_loss"]
        print(f"{time.perf_counter() - t0:.0f}s  train MRE {rep.mre:.3f} px  SDR {rep.sdr}  "
              f"final/initial loss {ratio:.4f}")


if __name__ == "__main__":
    main()
