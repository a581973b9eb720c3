import pytest

from groundcheck.ffl import Lexicon
from groundcheck.fc import FCConfig, train
from groundcheck.perturb import generate_corpus
from groundcheck.toyworld import RegionLayout, generate_gold


@pytest.fixture(scope="session")
def lex():
    return Lexicon.load()


@pytest.fixture(scope="session")
def layout(lex):
    return RegionLayout.for_lexicon(lex)


@pytest.fixture(scope="session")
def small_world(lex):
    """120 gold images, their synthetic corpus and an image map."""
    images, gold = generate_gold(120, lex, seed=11)
    synth, report = generate_corpus(gold, lex, seed=12)
    return {"images": {im.image_id: im for im in images}, "gold": gold, "synth": synth, "report": report}


@pytest.fixture(scope="session")
def small_checkpoint(small_world, lex):
    """A briefly trained model; good enough for wiring tests only."""
    cfg = FCConfig(epochs=3, d_joint=16, text_hidden=32, regressor_widths=(32, 16), warmup_steps=5)
    return train(small_world["synth"][:100], cfg, 0, small_world["images"], lex)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
