import pytest
import torch

from monotrans.decoder import DecoderConfig
from monotrans.encoder import EncoderConfig
from monotrans.model import ModelConfig, MonoTransNet

# criterion name -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def tiny_model_config(image_size=32, num_iterations=3, use_sgfm=True, num_classes=2):
    enc = EncoderConfig(image_size=image_size, patch_size=8, embed_dim=16, num_blocks=4,
                        num_heads=2, mlp_ratio=2.0, tap_layers=[1, 2, 3, 4])
    return ModelConfig(encoder=enc, channels=8, reduction=4,
                       decoder=DecoderConfig(num_iterations, num_classes), use_sgfm=use_sgfm)


TINY_OVERRIDES = [
    "encoder.image_size=32", "encoder.patch_size=8", "encoder.embed_dim=16",
    "encoder.num_blocks=4", "encoder.num_heads=2", "encoder.mlp_ratio=2.0",
    "encoder.tap_layers=1,2,3,4", "model.channels=8", "learning_rate=1e-3",
]


@pytest.fixture
def tiny_model():
    torch.manual_seed(0)
    return MonoTransNet(tiny_model_config()).eval()


@pytest.fixture
def tiny_samples():
    from monotrans.data import SceneConfig, generate_dataset
    return generate_dataset(4, seed=0, cfg=SceneConfig(image_size=32, radius=(0.2, 0.35)))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
