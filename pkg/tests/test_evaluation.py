import json

import numpy as np
import pytest

from lmbench.core import ContractError, LandmarkSet
from lmbench.evaluation import evaluate, score, write_metrics
from lmbench.models import ModelSpec, build, save_checkpoint
from lmbench.train import seed_everything


def test_perfect_oracle(small_chest):
    rep = evaluate(lambda r: r.truth, small_chest)
    assert rep.mre == 0.0
    assert all(v == 100.0 for v in rep.sdr.values())
    assert rep.n_images == len(small_chest.test_ids)
    assert rep.n_landmarks == rep.n_images * small_chest.spec.landmark_count


def test_shifted_oracle_pixel_metric(small_chest):
    rep = evaluate(lambda r: r.truth.translated(3, 4), small_chest)
    assert rep.mre == pytest.approx(5.0)
    assert rep.sdr == {3.0: 0.0, 6.0: 100.0, 9.0: 100.0}
    assert rep.extra["network_space"]["mre"] == pytest.approx(5.0)  # 64 px in both spaces


def test_k_mismatch(small_chest):
    with pytest.raises(ContractError):
        evaluate(lambda r: LandmarkSet(r.truth.points[:2], r.truth.space), small_chest)
    with pytest.raises(ContractError, match="K="):
        evaluate(build(ModelSpec("unet", "resnet18", "none", 3)), small_chest)


def test_unknown_metric_space(small_chest):
    with pytest.raises(ValueError):
        score([], [], small_chest, metric_space="retina")


def test_checkpoint_evaluation_is_deterministic(small_chest, tmp_path):
    seed_everything(0)
    model = build(ModelSpec("unet", "resnet18", "none", 6))
    path = save_checkpoint(tmp_path / "m.ckpt", model, [{"dataset": "chest"}], {})
    a = evaluate(path, small_chest)
    b = evaluate(path, small_chest)
    assert a.to_dict() == b.to_dict()
    out = write_metrics(tmp_path / "metrics.json", a, "chest", str(path), "abc")
    d = json.loads(out.read_text())
    assert {"dataset", "unit", "mre", "sdr", "n_images", "checkpoint", "config_hash"} <= set(d)
    assert set(d["sdr"]) == {"3px", "6px", "9px"}


def test_val_split_by_ids(small_chest):
    ids = small_chest.train_ids[:3]
    rep = evaluate(lambda r: r.truth, small_chest, ids=ids)
    assert rep.n_images == 3 and rep.extra["split"] == "ids"


def test_hand_uses_truth_wrist(family):
    hand = family["hand"]

    def pred(r):
        p = r.truth.points.copy()
        p[0, 0] += 10.0  # moving a predicted wrist point must not change the unit
        return LandmarkSet(p, r.truth.space)
    rep = evaluate(pred, hand)
    from lmbench.metrics import spacing_factor
    factors = [spacing_factor(r.truth, hand.spec.spacing_model) for r in hand.select(hand.test_ids)]
    k = hand.spec.landmark_count
    assert rep.mre == pytest.approx(np.sum(np.array(factors) * 10.0) / (k * len(factors)))
