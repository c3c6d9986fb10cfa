import pytest
import torch
from hypothesis import given, settings, strategies as st

from monotrans.encoder import LayerTokens
from monotrans.reassemble import FeaturePyramid, Reassemble, ReassembleConfig


def random_tokens(cfg: ReassembleConfig, batch=1, zero=False):
    g = cfg.image_size // cfg.patch_size
    make = torch.zeros if zero else torch.randn
    return LayerTokens([make(batch, g * g, cfg.embed_dim) for _ in range(4)], (g, g))


@pytest.mark.parametrize("size,patch,expected", [
    (96, 8, [24, 12, 6, 3]),
    (64, 8, [16, 8, 4, 2]),
    (384, 16, [96, 48, 24, 12]),
])
def test_level_sizes(size, patch, expected):
    cfg = ReassembleConfig(size, patch, embed_dim=16, channels=8)
    dp, sp = Reassemble(cfg)(random_tokens(cfg))
    assert dp.branch == "depth" and sp.branch == "segmentation"
    for pyr in (dp, sp):
        assert [lvl.shape[-1] for lvl in pyr.levels] == expected
        assert [lvl.shape[-2] for lvl in pyr.levels] == expected
        assert all(lvl.shape[1] == 8 for lvl in pyr.levels)


@settings(max_examples=15, deadline=None)
@given(mult=st.integers(1, 6), patch=st.sampled_from([4, 8, 16, 32]))
def test_shape_contract_for_any_multiple_of_32(mult, patch):
    size = 32 * mult
    cfg = ReassembleConfig(size, patch, embed_dim=8, channels=4)
    dp, sp = Reassemble(cfg)(random_tokens(cfg))
    assert [lvl.shape[-1] for lvl in dp.levels] == [size // s for s in (4, 8, 16, 32)]


def test_zero_tokens_zero_bias_gives_zero_pyramids():
    cfg = ReassembleConfig(96, 8, 16, 8)
    mod = Reassemble(cfg)
    with torch.no_grad():
        for name, p in mod.named_parameters():
            if name.endswith("bias"):
                p.zero_()
    dp, sp = mod(random_tokens(cfg, zero=True))
    for lvl in dp.levels + sp.levels:
        assert torch.count_nonzero(lvl) == 0


def test_branches_do_not_share_parameters():
    torch.manual_seed(0)
    cfg = ReassembleConfig(96, 8, 16, 8)
    mod = Reassemble(cfg)
    tokens = random_tokens(cfg)
    dp, sp = mod(tokens)
    with torch.no_grad():
        mod.depth.project[0].weight.add_(0.5)
        mod.depth.resample[0].weight.add_(0.5)
    dp2, sp2 = mod(tokens)
    for a, b in zip(sp.levels, sp2.levels):
        assert torch.equal(a, b)
    assert not torch.equal(dp.levels[0], dp2.levels[0])


def test_grid_mismatch_rejected():
    cfg = ReassembleConfig(96, 8, 16, 8)
    mod = Reassemble(cfg)
    bad = LayerTokens([torch.randn(1, 100, 16) for _ in range(4)], (10, 10))
    with pytest.raises(ValueError):
        mod(bad)


def test_config_rejects_bad_sizes():
    with pytest.raises(ValueError):
        ReassembleConfig(80, 8)
    with pytest.raises(ValueError):
        ReassembleConfig(96, 12)


def test_pyramid_requires_four_levels():
    with pytest.raises(ValueError):
        FeaturePyramid([torch.zeros(1, 1, 2, 2)] * 3, "depth")
