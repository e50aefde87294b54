import logging

import pytest

from core import config
from core.config import coerce, configure_logging, parse_config_file, section_defaults
from core.errors import UsageError
from core.run_context import RunContext, load_run_json


def write(tmp_path, text, name="config.txt"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParseConfigFile:
    def test_sections_and_values(self, tmp_path):
        path = write(
            tmp_path,
            "# Refinement\nthreshold = 0.7\n\nn_max = 3\n# Node Classifier\nk=4\n",
        )
        sections = parse_config_file([path])
        assert sections["refine"] == {"threshold": "0.7", "n_max": "3"}
        assert sections["clf"] == {"k": "4"}
        assert sections["reco"] == {}

    def test_unknown_header_closes_section(self, tmp_path):
        path = write(tmp_path, "# Refinement\nthreshold = 0.7\n# notes\nanything goes here\n")
        assert parse_config_file([path])["refine"] == {"threshold": "0.7"}

    def test_first_existing_file_wins(self, tmp_path):
        first = write(tmp_path, "# Simulation\nseeds = 2\n", "a.txt")
        second = write(tmp_path, "# Simulation\nseeds = 9\n", "b.txt")
        assert parse_config_file([tmp_path / "missing.txt", first, second])["simulate"] == {"seeds": "2"}

    def test_malformed_line(self, tmp_path):
        path = write(tmp_path, "# Refinement\nthreshold 0.7\n")
        with pytest.raises(UsageError, match=":2:"):
            parse_config_file([path])

    def test_no_file(self, tmp_path):
        sections = parse_config_file([tmp_path / "missing.txt"])
        assert all(values == {} for values in sections.values())


class TestCoerce:
    @pytest.mark.parametrize(
        "raw, like, expected",
        [
            ("true", False, True),
            ("Off", True, False),
            ("7", 1, 7),
            ("5e-6", 0.0, 5e-6),
            ("4", 1.0, 4.0),
            ("64,32", (64,), (64, 32)),
            ("negcn", "random-walk", "negcn"),
        ],
    )
    def test_conversion(self, raw, like, expected):
        value = coerce(raw, like)
        assert value == expected
        assert type(value) is type(expected)

    def test_non_string_passes_through(self):
        assert coerce(3, 1.0) == 3

    @pytest.mark.parametrize("raw, like", [("maybe", True), ("1.5", 1), ("x", 1.0)])
    def test_bad_value(self, raw, like):
        with pytest.raises(UsageError):
            coerce(raw, like)


class TestSectionDefaults:
    def test_file_overrides_builtin(self, monkeypatch):
        monkeypatch.setattr(config, "defaults", lambda: {"refine": {"n_max": "3"}})
        assert section_defaults("refine", {"threshold": 0.5, "n_max": 10}) == {"threshold": 0.5, "n_max": 3}

    def test_unknown_key(self, monkeypatch):
        monkeypatch.setattr(config, "defaults", lambda: {"refine": {"nmax": "3"}})
        with pytest.raises(UsageError, match="nmax"):
            section_defaults("refine", {"threshold": 0.5, "n_max": 10})


class TestRunContext:
    @pytest.fixture(autouse=True)
    def no_config_file(self, monkeypatch):
        monkeypatch.setattr(config, "defaults", lambda: {})

    def test_precedence(self):
        ctx = RunContext.resolve(
            "refine",
            ["refine"],
            {"seed": None, "bundle": None},
            {"threshold": 0.6, "n_max": 4},
            {"n_max": 7, "seed": None, "bundle": "b"},
        )
        assert ctx["threshold"] == 0.6
        assert ctx["n_max"] == 7
        assert ctx["bundle"] == "b"
        assert ctx["seed"] is None

    def test_run_json_lists_become_tuples(self):
        ctx = RunContext.resolve("train-edge", ["edge"], {"seed": None}, {"hidden": [16, 8]}, {})
        assert ctx["hidden"] == (16, 8)

    def test_run_json_strings_are_coerced(self):
        ctx = RunContext.resolve("train-clf", ["clf"], {"seed": None}, {"epochs": "12"}, {})
        assert ctx["epochs"] == 12

    def test_unknown_run_json_key(self):
        with pytest.raises(UsageError, match="thresh"):
            RunContext.resolve("refine", ["refine"], {"seed": None}, {"thresh": 0.6}, {})

    def test_require_seed(self):
        assert RunContext("synth", {"seed": 3}).require_seed() == 3
        with pytest.raises(UsageError, match="needs --seed"):
            RunContext("synth", {"seed": None}).require_seed()
        with pytest.raises(UsageError):
            RunContext("synth", {"seed": -1}).require_seed()

    def test_report_shape(self):
        ctx = RunContext("reco", {"seed": 1, "hidden": (4,)})
        ctx.record_input("test", "bb")
        ctx.record_input("train", "aa")
        report = ctx.report({"values": (1, 2)})
        assert report["schema_version"] == 1
        assert report["command"] == "reco"
        assert report["config"] == {"seed": 1, "hidden": [4]}
        assert list(report["inputs"]) == ["test", "train"]
        assert report["result"] == {"values": [1, 2]}


class TestLoadRunJson:
    def test_none(self):
        assert load_run_json(None) == {}

    def test_not_an_object(self, tmp_path):
        with pytest.raises(UsageError, match="JSON object"):
            load_run_json(str(write(tmp_path, "[1, 2]", "run.json")))

    def test_missing(self, tmp_path):
        with pytest.raises(UsageError, match="cannot read"):
            load_run_json(str(tmp_path / "run.json"))


@pytest.mark.parametrize("verbosity, level", [(-1, logging.WARNING), (0, logging.INFO), (2, logging.DEBUG)])
def test_configure_logging(verbosity, level):
    configure_logging(verbosity)
    root = logging.getLogger()
    assert root.level == level
    assert len(root.handlers) == 1
    assert root.handlers[0].formatter._fmt == "[%(name)s] %(message)s"
