"""Toy proof language: grammar, ordering rules, imports, target statuses."""

import random

import pytest

from swarmtrunk.checker import (
    CachingChecker,
    ExternalCheckerAdapter,
    TargetSpec,
    check,
    parse_target_list,
    parse_toy_file,
    render_target_list,
    status_counts,
    target_status,
)


def test_parse_def_and_thm_variants():
    text = (
        "def d1 needs .\n"
        "def d2 needs d1.\n"
        "thm t1 needs d1,d2. proof.\n"
        "thm t2 needs d1. sorry.\n"
        "thm t3 needs d1. sorry. [cited]\n"
        "thm t4 needs d1. sorry. [exercise]\n"
    )
    parsed = parse_toy_file("a.toy", text)
    assert parsed.errors == ()
    kinds = [(d.kind, d.name, d.body) for d in parsed.decls]
    assert kinds == [
        ("def", "d1", "proved"),
        ("def", "d2", "proved"),
        ("thm", "t1", "proved"),
        ("thm", "t2", "sorry"),
        ("thm", "t3", "sorry"),
        ("thm", "t4", "sorry"),
    ]
    assert parsed.decls[2].deps == ("d1", "d2")
    assert parsed.decls[4].markers == frozenset({"cited"})
    assert not parsed.decls[4].is_obligation
    assert parsed.decls[3].is_obligation


def test_parse_missing_period_is_error_at_line():
    parsed = parse_toy_file("a.toy", "thm t2 needs d1 proof\n")
    assert len(parsed.errors) == 1
    assert parsed.errors[0].line == 1


def test_parse_def_with_body_rejected():
    parsed = parse_toy_file("a.toy", "def d needs . proof.\n")
    assert parsed.errors and "no proof body" in parsed.errors[0].message


def test_parse_thm_without_body_rejected():
    parsed = parse_toy_file("a.toy", "thm t needs x.\n")
    assert parsed.errors and "requires a proof" in parsed.errors[0].message


def test_parse_import_lines_and_comments():
    parsed = parse_toy_file("b.toy", "# header\nimport a.toy\n\ndef d needs .\n")
    assert parsed.imports == ("a.toy",)
    assert len(parsed.decls) == 1


def test_import_after_decl_is_error():
    parsed = parse_toy_file("b.toy", "def d needs .\nimport a.toy\n")
    assert parsed.errors and "import after declarations" in parsed.errors[0].message


def test_check_clean_two_files():
    files = {
        "a.toy": "def d1 needs .\nthm t1 needs d1. proof.\n",
        "b.toy": "import a.toy\nthm t2 needs t1. sorry.\n",
    }
    report = check(files)
    assert report.ok
    assert report.decl_count == 3
    assert report.sorry_count == 1
    assert report.decl_names == frozenset({"d1", "t1", "t2"})


def test_check_duplicate_name_flagged():
    files = {
        "a.toy": "def d1 needs .\n",
        "b.toy": "def d1 needs .\n",
    }
    report = check(files)
    assert not report.ok
    assert any("duplicate declaration 'd1'" in e.message for e in report.errors)


def test_check_use_before_definition_same_file():
    report = check({"a.toy": "thm t needs d. proof.\ndef d needs .\n"})
    assert not report.ok
    assert any("uses 'd' before its definition" in e.message for e in report.errors)


def test_check_cross_file_requires_import():
    files = {
        "a.toy": "def d1 needs .\n",
        "b.toy": "thm t needs d1. proof.\n",
    }
    assert not check(files).ok
    files["b.toy"] = "import a.toy\nthm t needs d1. proof.\n"
    assert check(files).ok


def test_check_transitive_imports_visible():
    files = {
        "a.toy": "def d1 needs .\n",
        "b.toy": "import a.toy\ndef d2 needs d1.\n",
        "c.toy": "import b.toy\nthm t needs d1,d2. proof.\n",
    }
    assert check(files).ok


def test_check_import_cycle_is_error():
    files = {
        "a.toy": "import b.toy\ndef d1 needs .\n",
        "b.toy": "import a.toy\ndef d2 needs .\n",
    }
    report = check(files)
    assert not report.ok
    assert any("import cycle" in e.message for e in report.errors)


def test_check_missing_import_is_error():
    report = check({"a.toy": "import nowhere.toy\ndef d needs .\n"})
    assert not report.ok
    assert any("missing file" in e.message for e in report.errors)


def test_check_sorry_is_not_an_error():
    report = check({"a.toy": "def d needs .\nthm t needs d. sorry.\n"})
    assert report.ok
    assert report.sorry_count == 1


def test_check_determinism():
    files = {
        "a.toy": "def d1 needs .\nthm t needs missing. proof.\n",
        "b.toy": "def d1 needs .\n",
    }
    r1, r2 = check(files), check(dict(reversed(list(files.items()))))
    assert r1 == r2


def test_caching_checker_agrees_with_plain_check():
    cache = CachingChecker()
    rng = random.Random(5)
    for _ in range(50):
        n = rng.randint(1, 4)
        files = {
            f"f{i}.toy": f"def d{i}_{rng.randint(0, 2)} needs .\n" for i in range(n)
        }
        files["notes.md"] = "ignored"
        assert cache.check(files) == check(files)


# -- target list and statuses ---------------------------------------------------


def test_target_list_round_trip():
    text = "alpha ch01 thm\nbeta ch01 def\ngamma ch02 thm cited\ndelta ch02 thm exercise\n"
    targets = parse_target_list(text)
    assert [t.name for t in targets] == ["alpha", "beta", "gamma", "delta"]
    assert targets[2].excluded and targets[3].excluded
    assert render_target_list(targets) == text


def test_target_list_rejects_bad_rows():
    with pytest.raises(ValueError):
        parse_target_list("only_two fields\n")
    with pytest.raises(ValueError):
        parse_target_list("a ch01 lemma\n")
    with pytest.raises(ValueError):
        parse_target_list("a ch01 thm\na ch02 thm\n")


def test_target_status_classification():
    targets = parse_target_list(
        "present_proved ch01 thm\n"
        "present_sorry ch01 thm\n"
        "absent ch01 thm\n"
        "skipped ch01 thm cited\n"
        "a_def ch01 def\n"
    )
    report = check(
        {
            "a.toy": (
                "def a_def needs .\n"
                "thm present_proved needs a_def. proof.\n"
                "thm present_sorry needs a_def. sorry.\n"
            )
        }
    )
    statuses = target_status(report, targets)
    assert statuses == {
        "present_proved": "proved",
        "present_sorry": "stated",
        "absent": "missing",
        "skipped": "excluded",
        "a_def": "proved",
    }


def test_excluded_targets_never_become_obligations():
    # A 340-target list with 4 exclusions leaves 336 provable obligations.
    rows = [f"t{i:03d} ch01 thm" for i in range(336)]
    rows += [f"x{i} ch01 thm cited" for i in range(2)]
    rows += [f"y{i} ch01 thm exercise" for i in range(2)]
    targets = parse_target_list("\n".join(rows) + "\n")
    assert len(targets) == 340
    statuses = target_status(check({}), targets)
    counts = status_counts(statuses)
    assert counts["excluded"] == 4
    assert counts["missing"] == 336


def test_external_checker_adapter_is_stub():
    adapter = ExternalCheckerAdapter()
    with pytest.raises(NotImplementedError):
        adapter.check_snippet("def d needs .", {})
