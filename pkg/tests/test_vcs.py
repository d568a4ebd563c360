"""Version-control core: diffs, merges, worktrees, and the fold invariant."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmtrunk.vcs import (
    Diff,
    DuplicateBranchError,
    EmptyCommitError,
    ExternalGitAdapter,
    InMemoryVCS,
    NotFastForwardError,
    OwnershipError,
    apply_diff,
    compute_diff,
    merge_file,
    merge_trees,
)


def _file(lines):
    return "\n".join(lines) + "\n"


BASE_FILES = {
    "ch01_sets.toy": _file(["def set_core needs .", "thm union_comm needs set_core. sorry."]),
    "notes.md": _file(["scratch"]),
}


# -- diff / apply -------------------------------------------------------------


def test_diff_apply_identity_on_equal_trees():
    diff = compute_diff(BASE_FILES, BASE_FILES)
    assert diff.is_empty()
    assert apply_diff(BASE_FILES, diff) == BASE_FILES


def test_diff_counts_wholesale_replacement():
    old = {"a.toy": _file([f"old {i}" for i in range(10)])}
    new = {"a.toy": _file([f"new {i}" for i in range(12)])}
    diff = compute_diff(old, new)
    assert diff.added_lines == 12
    assert diff.removed_lines == 10
    assert apply_diff(old, diff) == new


def test_diff_add_and_delete_files():
    old = {"a.toy": "x\n"}
    new = {"b.toy": "y\n"}
    diff = compute_diff(old, new)
    ops = {fd.path: fd.op for fd in diff.files}
    assert ops == {"a.toy": "delete", "b.toy": "add"}
    assert apply_diff(old, diff) == new


def test_diff_payload_round_trip():
    diff = compute_diff(BASE_FILES, {"ch01_sets.toy": "def set_core needs .\n"})
    again = Diff.from_payload(diff.to_payload())
    assert again == diff


def _random_tree(rng, n_files=4, n_lines=12):
    files = {}
    for i in range(rng.randint(1, n_files)):
        lines = [f"line {rng.randint(0, 9)} {rng.randint(0, 99)}" for _ in range(rng.randint(0, n_lines))]
        files[f"f{i}.toy"] = "\n".join(lines) + ("\n" if rng.random() < 0.8 else "")
    return files


def test_diff_round_trip_randomized_corpus():
    # 1000 seeded cases: apply(diff(a, b), a) must reproduce b exactly.
    rng = random.Random(20260814)
    for _ in range(1000):
        a = _random_tree(rng)
        b = _random_tree(rng)
        assert apply_diff(a, compute_diff(a, b)) == b


@settings(max_examples=200, deadline=None)
@given(
    a=st.dictionaries(
        st.sampled_from(["p.toy", "q.toy", "r.md"]),
        st.text(alphabet="ab\n", max_size=30),
        max_size=3,
    ),
    b=st.dictionaries(
        st.sampled_from(["p.toy", "q.toy", "r.md"]),
        st.text(alphabet="ab\n", max_size=30),
        max_size=3,
    ),
)
def test_diff_round_trip_property(a, b):
    assert apply_diff(a, compute_diff(a, b)) == b


# -- three-way merge ----------------------------------------------------------


def test_merge_disjoint_edits_is_clean():
    base = _file([f"l{i}" for i in range(10)])
    ours = _file(["TOP"] + [f"l{i}" for i in range(1, 10)])
    theirs = _file([f"l{i}" for i in range(9)] + ["BOTTOM"])
    merged, detail, _ = merge_file(base, ours, theirs)
    assert detail is None
    assert merged == _file(["TOP"] + [f"l{i}" for i in range(1, 9)] + ["BOTTOM"])


def test_merge_adjacent_edits_conflict():
    # Distance-zero ranges must conflict even though they do not overlap.
    base = _file(["a", "b", "c", "d"])
    ours = _file(["a", "B", "c", "d"])
    theirs = _file(["a", "b", "C", "d"])
    merged, detail, _ = merge_file(base, ours, theirs)
    assert merged is None
    assert "overlapping" in detail


def test_merge_edits_with_gap_are_clean():
    base = _file(["a", "b", "c", "d", "e"])
    ours = _file(["A", "b", "c", "d", "e"])
    theirs = _file(["a", "b", "c", "D", "e"])
    merged, detail, _ = merge_file(base, ours, theirs)
    assert detail is None
    assert merged == _file(["A", "b", "c", "D", "e"])


def test_merge_identical_changes_take_either_side():
    base = _file(["a", "b"])
    both = _file(["a", "B"])
    merged, detail, _ = merge_file(base, both, both)
    assert detail is None and merged == both


def test_merge_same_point_insertions_conflict():
    base = _file(["a", "b"])
    ours = _file(["a", "x", "b"])
    theirs = _file(["a", "y", "b"])
    merged, detail, _ = merge_file(base, ours, theirs)
    assert merged is None


def test_merge_delete_vs_modify_conflicts():
    tree, conflicts = merge_trees(
        {"f.toy": "a\n"},
        {},
        {"f.toy": "a\nb\n"},
    )
    assert tree is None
    assert conflicts[0].path == "f.toy"


def test_merge_trees_one_sided_changes():
    base = {"a.toy": "1\n", "b.toy": "2\n"}
    ours = {"a.toy": "1\n", "b.toy": "2\n", "c.toy": "3\n"}
    theirs = {"a.toy": "ONE\n", "b.toy": "2\n"}
    tree, conflicts = merge_trees(base, ours, theirs)
    assert conflicts == ()
    assert tree == {"a.toy": "ONE\n", "b.toy": "2\n", "c.toy": "3\n"}


def _merge_oracle(base, ours, theirs):
    """Independent model: per-line ownership when each line is edited by at most one side."""
    base_l, ours_l, theirs_l = base.split("\n"), ours.split("\n"), theirs.split("\n")
    if len(base_l) != len(ours_l) or len(base_l) != len(theirs_l):
        return None
    out = []
    for b, o, t in zip(base_l, ours_l, theirs_l):
        if o != b and t != b and o != t:
            return None
        out.append(o if o != b else t)
    return "\n".join(out)


def test_merge_matches_line_ownership_oracle():
    # Same-length single-line edits with a one-line buffer: engine and oracle agree.
    rng = random.Random(7)
    for _ in range(300):
        n = rng.randint(6, 14)
        base_lines = [f"b{i}" for i in range(n)]
        base = "\n".join(base_lines)
        i = rng.randrange(0, n)
        choices = [j for j in range(n) if abs(j - i) > 1]
        j = rng.choice(choices)
        ours_lines = list(base_lines)
        ours_lines[i] = "OURS"
        theirs_lines = list(base_lines)
        theirs_lines[j] = "THEIRS"
        ours, theirs = "\n".join(ours_lines), "\n".join(theirs_lines)
        merged, detail, _ = merge_file(base, ours, theirs)
        assert detail is None
        assert merged == _merge_oracle(base, ours, theirs)


# -- repository operations ------------------------------------------------------


def _repo():
    return InMemoryVCS(BASE_FILES)


def test_worktree_create_commit_merge_flow():
    vcs = _repo()
    wt = vcs.create_worktree("agent-1/task", owner="agent-1")
    assert wt.base == vcs.main_head()
    vcs.stage("agent-1/task", "agent-1", "ch02_maps.toy", "def map_core needs .\n")
    cid = vcs.commit("agent-1/task", "agent-1", "add ch02", timestamp=1.0)
    assert vcs.head_of("agent-1/task") == cid
    status = vcs.rebase_onto_main("agent-1/task", timestamp=2.0)
    assert status.clean
    head, diff = vcs.merge_to_main("agent-1/task")
    assert vcs.main_head() == head
    assert diff.paths == ("ch02_maps.toy",)
    assert vcs.snapshot().files["ch02_maps.toy"] == "def map_core needs .\n"


def test_duplicate_worktree_rejected():
    vcs = _repo()
    vcs.create_worktree("b", owner="a1")
    with pytest.raises(DuplicateBranchError):
        vcs.create_worktree("b", owner="a2")


def test_commit_requires_ownership_and_changes():
    vcs = _repo()
    vcs.create_worktree("b", owner="a1")
    with pytest.raises(OwnershipError):
        vcs.stage("b", "intruder", "x.toy", "def x needs .\n")
    with pytest.raises(EmptyCommitError):
        vcs.commit("b", "a1", "empty", timestamp=1.0)
    # Writing identical content is not a change.
    vcs.stage("b", "a1", "notes.md", BASE_FILES["notes.md"])
    with pytest.raises(EmptyCommitError):
        vcs.commit("b", "a1", "noop", timestamp=1.0)


def test_merge_requires_rebase_first():
    vcs = _repo()
    vcs.create_worktree("first", owner="a1")
    vcs.stage("first", "a1", "f1.toy", "def f1 needs .\n")
    vcs.commit("first", "a1", "f1", timestamp=1.0)
    vcs.create_worktree("second", owner="a2")
    vcs.stage("second", "a2", "f2.toy", "def f2 needs .\n")
    vcs.commit("second", "a2", "f2", timestamp=1.0)
    assert vcs.rebase_onto_main("first", timestamp=2.0).clean
    vcs.merge_to_main("first")
    with pytest.raises(NotFastForwardError):
        vcs.merge_to_main("second")
    assert vcs.rebase_onto_main("second", timestamp=3.0).clean
    vcs.merge_to_main("second")
    assert set(vcs.snapshot().files) >= {"f1.toy", "f2.toy"}


def test_rebase_conflict_reports_paths():
    vcs = _repo()
    vcs.create_worktree("one", owner="a1")
    vcs.stage("one", "a1", "ch01_sets.toy", "def set_core needs .\nthm union_comm needs set_core. proof.\n")
    vcs.commit("one", "a1", "prove", timestamp=1.0)
    vcs.create_worktree("two", owner="a2")
    vcs.stage("two", "a2", "ch01_sets.toy", "def set_core needs .\nthm union_comm needs set_core. sorry. [cited]\n")
    vcs.commit("two", "a2", "mark", timestamp=1.0)
    assert vcs.rebase_onto_main("one", timestamp=2.0).clean
    vcs.merge_to_main("one")
    status = vcs.rebase_onto_main("two", timestamp=3.0)
    assert not status.clean
    assert status.conflicts[0].path == "ch01_sets.toy"
    # A failed rebase must leave the branch untouched.
    assert vcs.head_of("two") in vcs.snapshot("two").history


def test_merged_diff_fold_reproduces_main():
    # Serializability oracle: apply the recorded merge diffs, in order, to the
    # initial tree and compare byte for byte with the final main tree.
    rng = random.Random(99)
    vcs = _repo()
    initial = dict(vcs.snapshot().files)
    merged_diffs = []
    for i in range(30):
        branch = f"agent-{i}/job"
        owner = f"agent-{i}"
        vcs.create_worktree(branch, owner=owner)
        path = f"ch{rng.randint(1, 5):02d}_gen.toy"
        existing = vcs.worktree_files(branch).get(path, "")
        vcs.stage(branch, owner, path, existing + f"def d_{i} needs .\n")
        vcs.commit(branch, owner, f"add d_{i}", timestamp=float(i))
        if vcs.rebase_onto_main(branch, timestamp=float(i)).clean:
            _, diff = vcs.merge_to_main(branch)
            merged_diffs.append(diff)
        vcs.drop_worktree(branch)
    replayed = initial
    for diff in merged_diffs:
        replayed = apply_diff(replayed, diff)
    assert replayed == vcs.snapshot().files


def test_checkpoint_payload_round_trip():
    vcs = _repo()
    vcs.create_worktree("b", owner="a1")
    vcs.stage("b", "a1", "x.toy", "def x needs .\n")
    vcs.commit("b", "a1", "x", timestamp=1.0)
    vcs.stage("b", "a1", "y.toy", "def y needs .\n")
    clone = InMemoryVCS.from_payload(vcs.to_payload())
    assert clone.main_head() == vcs.main_head()
    assert clone.snapshot("b").files == vcs.snapshot("b").files
    assert clone.worktree("b").dirty == vcs.worktree("b").dirty


def test_external_git_adapter_is_stub():
    adapter = ExternalGitAdapter("/tmp/repo")
    with pytest.raises(NotImplementedError):
        adapter.create_worktree("b", "a1")
    with pytest.raises(NotImplementedError):
        adapter.merge_to_main("b")
