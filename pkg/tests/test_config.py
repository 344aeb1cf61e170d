import pytest

from ergnn.config import build_config, parse_config_text
from ergnn.errors import ValidationError


def test_parse_types_and_comments():
    vals = parse_config_text("""
# training
[train]
epochs = 7
lambda = 0.5   # weight on the similarity loss
use_filter = false
fraud_mean = 1.5, 2.5
seeds = 1,2,3
""")
    assert vals == {"epochs": 7, "lambda": 0.5, "use_filter": False,
                    "fraud_mean": (1.5, 2.5), "seeds": (1, 2, 3)}


def test_unknown_key_rejected_with_line():
    with pytest.raises(ValidationError, match=r"cfg:2: unknown config key 'learnin_rate'"):
        parse_config_text("epochs=3\nlearnin_rate=0.1\n", "cfg")


def test_bad_value():
    with pytest.raises(ValidationError, match="epochs"):
        parse_config_text("epochs=many")


def test_precedence():
    cfg = build_config({"learning_rate": 0.02, "seed": 3}, {"seed": 9, "preset": "amazon-format"})
    assert cfg.train.learning_rate == 0.02  # file beats preset
    assert cfg.train.seed == cfg.synthetic.seed == 9  # flag beats file
    assert build_config({}, {"preset": "amazon-format"}).train.learning_rate == 0.005
    assert build_config().train.learning_rate == 0.01


def test_invalid_values_rejected():
    with pytest.raises(ValidationError):
        build_config({"camouflage_ratio": 2.0})
    with pytest.raises(ValidationError):
        build_config({}, {"preset": "imdb"})
