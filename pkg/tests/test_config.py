from fractions import Fraction

import pytest

from leafstress.config import RunConfig, dump_config, load_config, parse_config, write_config
from leafstress.errors import InvalidConfig, IoError


def test_default_roundtrip():
    run = RunConfig()
    assert parse_config(dump_config(run)) == run


def test_edited_roundtrip(tmp_path):
    run = parse_config(
        "[model]\nwidths = 8, 16\ninput_size = 32\nmode = single_task_stress\n"
        "[schedule]\nhalf_first = false\n[split]\ntrain = 3/5\nval = 1/5\ntest = 1/5\n"
        "[augment]\nmixup_enabled = yes\nfill = 0.5, 0.5, 0.5\n[sgd]\nlr0 = 0.1\n"
    )
    assert run.model.widths == (8, 16) and run.model.mode == "single_task_stress"
    assert run.schedule.half_first is False and run.split.train == Fraction(3, 5)
    assert run.augment.mixup_enabled and run.augment.fill == (0.5, 0.5, 0.5) and run.sgd.lr0 == 0.1
    write_config(tmp_path / "c.ini", run)
    assert load_config(tmp_path / "c.ini") == run
    assert dump_config(load_config(tmp_path / "c.ini")) == (tmp_path / "c.ini").read_text()


@pytest.mark.parametrize(
    "text",
    ["[optimizer]\nlr0 = 1\n", "[sgd]\nlearning_rate = 1\n", "[sgd]\nepochs = ten\n",
     "[schedule]\nhalf_first = maybe\n", "[split]\nseed = 3\n", "no section = 1\n"],
)
def test_invalid_config(text):
    with pytest.raises(InvalidConfig):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_config(tmp_path / "none.ini")
