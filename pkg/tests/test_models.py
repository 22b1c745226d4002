import pytest
import torch

from lmbench.models import (HEAD_PREFIX, CapabilityError, CheckpointLoadError, ModelSpec,
                            WeightsUnavailableError, body_digest, build, load_checkpoint,
                            save_checkpoint, swap_head, table1_grid)


def test_table1_grid_has_eight_buildable_rows():
    grid = table1_grid()
    assert len(grid) == 8
    assert ("deeplabv3", "vgg19") not in {(s.architecture, s.encoder) for s in grid}


def test_deeplab_vgg_rejected():
    with pytest.raises(CapabilityError):
        ModelSpec("deeplabv3", "vgg19", "none", 37)
    with pytest.raises(CapabilityError):
        ModelSpec("hourglass", "vgg19")


def test_unetpp_vgg19_hand_shape():
    torch.manual_seed(0)
    try:
        model = build(ModelSpec("unetpp", "vgg19", "imagenet", 37))
    except WeightsUnavailableError:
        model = build(ModelSpec("unetpp", "vgg19", "none", 37))
    with torch.no_grad():
        out = model.eval()(torch.zeros(1, 1, 512, 512))
    assert out.shape == (1, 37, 512, 512)


def test_imagenet_failure_is_typed(monkeypatch):
    import lmbench.models as m

    def boom(spec, weights):
        if weights == "imagenet":
            raise OSError("offline")
        raise AssertionError
    monkeypatch.setattr(m, "_smp_model", boom)
    with pytest.raises(WeightsUnavailableError, match="offline"):
        build(ModelSpec("unet", "vgg19", "imagenet", 3))


def test_eval_forward_deterministic():
    torch.manual_seed(1)
    model = build(ModelSpec("unet", "resnext101_32x8d", "none", 1)).eval()
    x = torch.randn(1, 3, 64, 64)
    with torch.no_grad():
        assert torch.equal(model(x), model(x))


@pytest.mark.parametrize("arch", ["unet", "unetpp", "deeplabv3"])
@pytest.mark.parametrize("hw", [(64, 64), (72, 40)])
def test_resolution_preserved(arch, hw):
    model = build(ModelSpec(arch, "resnet18", "none", 5)).eval()
    with torch.no_grad():
        assert model(torch.rand(2, 1, *hw)).shape == (2, 5, *hw)
        assert model(torch.rand(1, 3, *hw)).shape == (1, 5, *hw)


def _ckpt(tmp_path, k=37, lineage=("hand",)):
    torch.manual_seed(0)
    model = build(ModelSpec("unet", "resnet18", "none", k))
    path = save_checkpoint(tmp_path / "src.ckpt", model, [{"dataset": d} for d in lineage])
    return load_checkpoint(path)


def test_swap_head_keeps_body(tmp_path):
    ckpt = _ckpt(tmp_path)
    new = swap_head(ckpt, 6, seed=3)
    state = new.state_dict()
    for k, v in ckpt.state_dict.items():
        if k.startswith(HEAD_PREFIX):
            continue
        assert torch.equal(state[k], v), k
    assert state[HEAD_PREFIX + "weight"].shape[0] == 6
    assert new.spec.out_channels == 6
    assert body_digest(state) == body_digest(ckpt.state_dict)
    before = sum(v.numel() for k, v in ckpt.state_dict.items() if k.startswith(HEAD_PREFIX))
    after = sum(v.numel() for k, v in state.items() if k.startswith(HEAD_PREFIX))
    body_before = sum(v.numel() for k, v in ckpt.state_dict.items() if not k.startswith(HEAD_PREFIX))
    body_after = sum(v.numel() for k, v in state.items() if not k.startswith(HEAD_PREFIX))
    assert body_before == body_after and before != after


def test_swap_head_same_k_reinitialises(tmp_path):
    ckpt = _ckpt(tmp_path)
    new = swap_head(ckpt, 37, seed=0)
    assert not torch.equal(new.state_dict()[HEAD_PREFIX + "weight"], ckpt.state_dict[HEAD_PREFIX + "weight"])


def test_swap_head_seeded(tmp_path):
    ckpt = _ckpt(tmp_path)
    a = swap_head(ckpt, 6, seed=5).state_dict()[HEAD_PREFIX + "weight"]
    b = swap_head(ckpt, 6, seed=5).state_dict()[HEAD_PREFIX + "weight"]
    c = swap_head(ckpt, 6, seed=6).state_dict()[HEAD_PREFIX + "weight"]
    assert torch.equal(a, b) and not torch.equal(a, c)
    fan_in = a.shape[1] * a.shape[2] * a.shape[3]
    assert a.abs().max() <= fan_in ** -0.5


def test_checkpoint_round_trip(tmp_path):
    ckpt = _ckpt(tmp_path, k=4, lineage=("chest", "head"))
    assert ckpt.spec.out_channels == 4
    assert [s["dataset"] for s in ckpt.lineage] == ["chest", "head"]
    sidecar = (tmp_path / "src.ckpt.json").read_text()
    assert '"lineage"' in sidecar and '"spec"' in sidecar


def test_build_from_checkpoint_ref(tmp_path):
    ckpt = _ckpt(tmp_path, k=4)
    m = build(ModelSpec("unet", "resnet18", ckpt.path, 4))
    assert all(torch.equal(m.state_dict()[k], v) for k, v in ckpt.state_dict.items())
    with pytest.raises(CheckpointLoadError):
        build(ModelSpec("unet", "resnet18", ckpt.path, 5))


def test_corrupt_checkpoint(tmp_path):
    _ckpt(tmp_path)
    (tmp_path / "src.ckpt").write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointLoadError):
        load_checkpoint(tmp_path / "src.ckpt")
    with pytest.raises(CheckpointLoadError):
        load_checkpoint(tmp_path / "missing.ckpt")
