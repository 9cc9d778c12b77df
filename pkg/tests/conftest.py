import os
import subprocess
import sys

import pytest

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def data_path(name: str) -> str:
    return os.path.join(DATA_DIR, name)


def run_cli(args, cwd=None, env_extra=None):
    """Run the console entry point in a subprocess with a pinned terminal width."""
    env = dict(os.environ)
    env["COLUMNS"] = "80"
    env.pop("TTRNN_LOG", None)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "ttrnn", *args],
        capture_output=True,
        text=True,
        cwd=cwd,
        env=env,
    )


@pytest.fixture(scope="session")
def tiny_corpus():
    """A small cleaned synthetic corpus shared by training-level tests."""
    from ttrnn.synth import make_dataset
    from ttrnn.textpipe import clean_example

    return [clean_example(r) for r in make_dataset(120, seed=5)]


@pytest.fixture(scope="session")
def tiny_bundle(tiny_corpus):
    """One quickly trained model reused by serialization and CLI-level tests."""
    from ttrnn.training import TrainConfig, train

    config = TrainConfig(
        epochs_max=2,
        early_stop_patience=0,
        batch_size=32,
        seed=7,
        hidden_dim=8,
        embed_dim=8,
        max_len=12,
    )
    bundle, records = train(config, tiny_corpus, "gru")
    return bundle, records, config
