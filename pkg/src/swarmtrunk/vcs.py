"""Deterministic in-memory version control with worktrees, rebases and merges.

Every commit stores a full file tree (a path -> text mapping, structurally
shared with its parent where unchanged), so snapshots, diffs and three-way
merges are pure functions of commit content.  Commit ids are content hashes,
which makes whole-repository state directly comparable across runs.

The merge model is line based and intentionally conservative: two edits
conflict when their modified line ranges in the common base overlap or touch
(distance zero).  There is no rename detection; a rename is a delete plus an
add.  ``main`` only ever advances by fast-forwarding to a branch that was
first rebased on top of it, which is what makes the merged-diff fold
reproduce ``main`` byte for byte.
"""

from __future__ import annotations

import difflib
import hashlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Optional, Sequence

CODE_SUFFIX = ".toy"
TRACKER_DIR = "issues"

MAIN = "main"


class VcsError(Exception):
    """Base class for version-control failures."""


class UnknownBranchError(VcsError):
    """Named branch does not exist."""


class UnknownCommitError(VcsError):
    """Named commit id does not exist."""


class DuplicateBranchError(VcsError):
    """Branch or worktree with this name already exists."""


class OwnershipError(VcsError):
    """Caller tried to write through a worktree it does not own."""


class EmptyCommitError(VcsError):
    """Commit requested with an empty dirty set."""


class NotFastForwardError(VcsError):
    """Merge to main requires the branch to sit directly on the main head."""


class ProtectedBranchError(VcsError):
    """Operation would rewrite main outside of merge_to_main."""


def is_code_path(path: str) -> bool:
    """True for proof-source paths; everything else is coordination state."""
    return path.endswith(CODE_SUFFIX)


def _lines(text: str) -> list[str]:
    # split("\n") keeps a trailing sentinel element for newline-terminated
    # files, so join/split round-trips any content exactly.
    return text.split("\n")


def _join(lines: Sequence[str]) -> str:
    return "\n".join(lines)


@dataclass(frozen=True)
class Hunk:
    """One contiguous edit: base lines [old_start, old_start+len(old_lines)) replaced."""

    old_start: int
    old_lines: tuple[str, ...]
    new_start: int
    new_lines: tuple[str, ...]

    def to_payload(self) -> dict:
        return {
            "old_start": self.old_start,
            "old_lines": list(self.old_lines),
            "new_start": self.new_start,
            "new_lines": list(self.new_lines),
        }

    @staticmethod
    def from_payload(data: Mapping) -> "Hunk":
        return Hunk(
            old_start=int(data["old_start"]),
            old_lines=tuple(data["old_lines"]),
            new_start=int(data["new_start"]),
            new_lines=tuple(data["new_lines"]),
        )


@dataclass(frozen=True)
class FileDiff:
    """All hunks for one path; op is one of add, delete, modify."""

    path: str
    op: str
    hunks: tuple[Hunk, ...]

    def to_payload(self) -> dict:
        return {"path": self.path, "op": self.op, "hunks": [h.to_payload() for h in self.hunks]}

    @staticmethod
    def from_payload(data: Mapping) -> "FileDiff":
        return FileDiff(
            path=str(data["path"]),
            op=str(data["op"]),
            hunks=tuple(Hunk.from_payload(h) for h in data["hunks"]),
        )


@dataclass(frozen=True)
class Diff:
    """Line-level difference between two trees plus summary statistics."""

    files: tuple[FileDiff, ...]

    @property
    def added_lines(self) -> int:
        return sum(len(h.new_lines) for fd in self.files for h in fd.hunks)

    @property
    def removed_lines(self) -> int:
        return sum(len(h.old_lines) for fd in self.files for h in fd.hunks)

    @property
    def paths(self) -> tuple[str, ...]:
        return tuple(fd.path for fd in self.files)

    @property
    def code_paths(self) -> tuple[str, ...]:
        return tuple(p for p in self.paths if is_code_path(p))

    @property
    def coordination_paths(self) -> tuple[str, ...]:
        return tuple(p for p in self.paths if not is_code_path(p))

    def is_empty(self) -> bool:
        return not self.files

    def to_payload(self) -> dict:
        return {
            "files": [fd.to_payload() for fd in self.files],
            "added": self.added_lines,
            "removed": self.removed_lines,
        }

    @staticmethod
    def from_payload(data: Mapping) -> "Diff":
        return Diff(files=tuple(FileDiff.from_payload(fd) for fd in data["files"]))


def compute_diff(old: Mapping[str, str], new: Mapping[str, str]) -> Diff:
    """Line diff between two trees, deterministic in path and hunk order."""
    out: list[FileDiff] = []
    for path in sorted(set(old) | set(new)):
        before = old.get(path)
        after = new.get(path)
        if before == after:
            continue
        a = _lines(before) if before is not None else []
        b = _lines(after) if after is not None else []
        matcher = difflib.SequenceMatcher(a=a, b=b, autojunk=False)
        hunks = [
            Hunk(i1, tuple(a[i1:i2]), j1, tuple(b[j1:j2]))
            for tag, i1, i2, j1, j2 in matcher.get_opcodes()
            if tag != "equal"
        ]
        op = "add" if before is None else "delete" if after is None else "modify"
        out.append(FileDiff(path=path, op=op, hunks=tuple(hunks)))
    return Diff(files=tuple(out))


def apply_diff(files: Mapping[str, str], diff: Diff) -> dict[str, str]:
    """Apply a diff produced by compute_diff; exact inverse of the diff step."""
    result = dict(files)
    for fd in diff.files:
        if fd.op == "delete":
            result.pop(fd.path, None)
            continue
        base = _lines(result[fd.path]) if fd.op == "modify" else []
        merged: list[str] = []
        pos = 0
        for hunk in fd.hunks:
            merged.extend(base[pos : hunk.old_start])
            merged.extend(hunk.new_lines)
            pos = hunk.old_start + len(hunk.old_lines)
        merged.extend(base[pos:])
        result[fd.path] = _join(merged)
    return result


def _changed_ranges(base: list[str], side: list[str]) -> list[tuple[int, int, tuple[str, ...]]]:
    """Base-coordinate ranges [i1, i2) rewritten by side, with replacement lines."""
    matcher = difflib.SequenceMatcher(a=base, b=side, autojunk=False)
    return [
        (i1, i2, tuple(side[j1:j2]))
        for tag, i1, i2, j1, j2 in matcher.get_opcodes()
        if tag != "equal"
    ]


def _ranges_touch(a: tuple[int, int], b: tuple[int, int]) -> bool:
    # Half-open ranges conflict when they overlap or are adjacent (distance 0).
    return a[0] <= b[1] and b[0] <= a[1]


@dataclass(frozen=True)
class FileConflict:
    """One conflicting file in a three-way merge."""

    path: str
    detail: str


def merge_file(
    base: Optional[str], ours: Optional[str], theirs: Optional[str]
) -> tuple[Optional[str], Optional[str], bool]:
    """Three-way merge of one file.

    Returns (merged_content, conflict_detail, file_exists).  merged_content is
    None when the file ends up deleted; conflict_detail is None on success.
    """
    if ours == theirs:
        return ours, None, ours is not None
    if ours == base:
        return theirs, None, theirs is not None
    if theirs == base:
        return ours, None, ours is not None
    # Both sides changed the file in different ways.
    if base is None:
        return None, "both sides added the file with different content", True
    if ours is None or theirs is None:
        return None, "one side deleted a file the other side modified", True
    base_lines = _lines(base)
    ours_ops = _changed_ranges(base_lines, _lines(ours))
    theirs_ops = _changed_ranges(base_lines, _lines(theirs))
    for i1, i2, _ in ours_ops:
        for j1, j2, _ in theirs_ops:
            if _ranges_touch((i1, i2), (j1, j2)):
                return (
                    None,
                    f"overlapping edits at base lines {i1}-{i2} and {j1}-{j2}",
                    True,
                )
    merged: list[str] = []
    pos = 0
    for i1, i2, repl in sorted(ours_ops + theirs_ops):
        merged.extend(base_lines[pos:i1])
        merged.extend(repl)
        pos = i2
    merged.extend(base_lines[pos:])
    return _join(merged), None, True


def merge_trees(
    base: Mapping[str, str], ours: Mapping[str, str], theirs: Mapping[str, str]
) -> tuple[Optional[dict[str, str]], tuple[FileConflict, ...]]:
    """Three-way merge of whole trees; returns (tree, conflicts)."""
    conflicts: list[FileConflict] = []
    merged: dict[str, str] = {}
    for path in sorted(set(base) | set(ours) | set(theirs)):
        content, detail, exists = merge_file(base.get(path), ours.get(path), theirs.get(path))
        if detail is not None:
            conflicts.append(FileConflict(path=path, detail=detail))
        elif exists and content is not None:
            merged[path] = content
    if conflicts:
        return None, tuple(conflicts)
    return merged, ()


@dataclass(frozen=True)
class MergeStatus:
    """Outcome of a rebase or merge attempt."""

    clean: bool
    conflicts: tuple[FileConflict, ...] = ()


def _hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def tree_hash(files: Mapping[str, str]) -> str:
    """Content hash of a whole tree, stable under dict ordering."""
    digest = hashlib.sha256()
    for path in sorted(files):
        digest.update(path.encode("utf-8"))
        digest.update(b"\x00")
        digest.update(_hash_text(files[path]).encode("ascii"))
        digest.update(b"\x00")
    return digest.hexdigest()


@dataclass(frozen=True)
class Commit:
    """Immutable commit: full tree plus identity metadata."""

    id: str
    parent: Optional[str]
    files: Mapping[str, str]
    message: str
    author: str
    timestamp: float
    tree: str

    @staticmethod
    def build(
        parent: Optional[str],
        files: Mapping[str, str],
        message: str,
        author: str,
        timestamp: float,
    ) -> "Commit":
        tree = tree_hash(files)
        raw = "\x00".join([parent or "", tree, message, author])
        cid = hashlib.sha256(raw.encode("utf-8")).hexdigest()[:24]
        return Commit(
            id=cid,
            parent=parent,
            files=dict(files),
            message=message,
            author=author,
            timestamp=timestamp,
            tree=tree,
        )


@dataclass(frozen=True)
class RepoState:
    """Read-only snapshot of one ref: files, head commit and linear history."""

    files: Mapping[str, str]
    head: str
    history: tuple[str, ...]


@dataclass
class Worktree:
    """A branch checkout owned by one agent, with an uncommitted overlay.

    ``dirty`` maps path -> new content, or None for a staged deletion; only
    paths that differ from the branch head tree are kept.
    """

    branch: str
    owner: str
    base: str
    dirty: dict[str, Optional[str]] = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "branch": self.branch,
            "owner": self.owner,
            "base": self.base,
            "dirty": dict(self.dirty),
        }

    @staticmethod
    def from_payload(data: Mapping) -> "Worktree":
        return Worktree(
            branch=str(data["branch"]),
            owner=str(data["owner"]),
            base=str(data["base"]),
            dirty=dict(data["dirty"]),
        )


class InMemoryVCS:
    """Single shared repository used by every agent in a run.

    All mutating operations take one internal lock, so the structure is
    linearizable when the control API reads it from another thread.  The
    orchestrator itself is single-threaded and deterministic.
    """

    def __init__(self, initial_files: Mapping[str, str], author: str = "system") -> None:
        self._lock = threading.RLock()
        root = Commit.build(None, dict(initial_files), "init", author, 0.0)
        self._commits: dict[str, Commit] = {root.id: root}
        self._branches: dict[str, str] = {MAIN: root.id}
        self._worktrees: dict[str, Worktree] = {}
        self._root = root.id

    # -- queries ------------------------------------------------------------

    @property
    def root_commit(self) -> str:
        return self._root

    def main_head(self) -> str:
        return self._branches[MAIN]

    def head_of(self, branch: str) -> str:
        with self._lock:
            if branch not in self._branches:
                raise UnknownBranchError(branch)
            return self._branches[branch]

    def has_branch(self, branch: str) -> bool:
        with self._lock:
            return branch in self._branches

    def commit_object(self, commit_id: str) -> Commit:
        with self._lock:
            if commit_id not in self._commits:
                raise UnknownCommitError(commit_id)
            return self._commits[commit_id]

    def _resolve(self, ref: str) -> Commit:
        if ref in self._branches:
            return self._commits[self._branches[ref]]
        if ref in self._commits:
            return self._commits[ref]
        raise UnknownCommitError(ref)

    def _history(self, commit_id: str) -> tuple[str, ...]:
        out: list[str] = []
        cur: Optional[str] = commit_id
        while cur is not None:
            out.append(cur)
            cur = self._commits[cur].parent
        return tuple(reversed(out))

    def snapshot(self, ref: str = MAIN) -> RepoState:
        """Immutable view of a branch or commit id."""
        with self._lock:
            commit = self._resolve(ref)
            return RepoState(files=dict(commit.files), head=commit.id, history=self._history(commit.id))

    def worktree(self, branch: str) -> Worktree:
        with self._lock:
            if branch not in self._worktrees:
                raise UnknownBranchError(branch)
            return self._worktrees[branch]

    def worktrees(self) -> tuple[str, ...]:
        with self._lock:
            return tuple(sorted(self._worktrees))

    def worktree_files(self, branch: str) -> dict[str, str]:
        """Branch head tree with the uncommitted overlay applied."""
        with self._lock:
            wt = self.worktree(branch)
            files = dict(self._commits[self._branches[branch]].files)
            for path, content in wt.dirty.items():
                if content is None:
                    files.pop(path, None)
                else:
                    files[path] = content
            return files

    def merge_base(self, branch: str, onto: str = MAIN) -> str:
        """Last common commit of two linear histories."""
        with self._lock:
            onto_ids = set(self._history(self.head_of(onto)))
            cur: Optional[str] = self.head_of(branch)
            while cur is not None:
                if cur in onto_ids:
                    return cur
                cur = self._commits[cur].parent
            raise UnknownCommitError(f"no common ancestor for {branch} and {onto}")

    def commits_since(self, branch: str, base: str) -> list[Commit]:
        """Branch commits after ``base``, oldest first."""
        with self._lock:
            out: list[Commit] = []
            cur: Optional[str] = self.head_of(branch)
            while cur is not None and cur != base:
                out.append(self._commits[cur])
                cur = self._commits[cur].parent
            if cur != base:
                raise UnknownCommitError(base)
            return list(reversed(out))

    def diff(self, from_ref: str, to_ref: str) -> Diff:
        """Diff between two refs (branch names or commit ids)."""
        with self._lock:
            return compute_diff(self._resolve(from_ref).files, self._resolve(to_ref).files)

    # -- worktree lifecycle ---------------------------------------------------

    def create_worktree(self, branch: str, owner: str) -> Worktree:
        """Create a branch plus worktree at the current main head."""
        with self._lock:
            if branch in self._branches or branch in self._worktrees:
                raise DuplicateBranchError(branch)
            head = self.main_head()
            self._branches[branch] = head
            wt = Worktree(branch=branch, owner=owner, base=head)
            self._worktrees[branch] = wt
            return wt

    def drop_worktree(self, branch: str, delete_branch: bool = True) -> None:
        """Discard a worktree (and by default its branch)."""
        with self._lock:
            self._worktrees.pop(branch, None)
            if delete_branch and branch != MAIN:
                self._branches.pop(branch, None)

    def stage(self, branch: str, owner: str, path: str, content: Optional[str]) -> None:
        """Stage a write (or a deletion when content is None) in the overlay."""
        with self._lock:
            wt = self.worktree(branch)
            if wt.owner != owner:
                raise OwnershipError(f"{owner} does not own worktree {branch}")
            tree = self._commits[self._branches[branch]].files
            current = tree.get(path)
            if content == current:
                wt.dirty.pop(path, None)
            else:
                wt.dirty[path] = content

    def reset_worktree(self, branch: str, owner: str) -> None:
        """Drop all uncommitted changes."""
        with self._lock:
            wt = self.worktree(branch)
            if wt.owner != owner:
                raise OwnershipError(f"{owner} does not own worktree {branch}")
            wt.dirty.clear()

    def restart_branch(self, branch: str, owner: str) -> str:
        """Abandon the branch's commits and start over from the current main head.

        The escape hatch for a conflicted rebase: equivalent to dropping the
        worktree and recreating it, but keeps ownership and the branch name.
        Returns the new base commit id.
        """
        with self._lock:
            wt = self.worktree(branch)
            if wt.owner != owner:
                raise OwnershipError(f"{owner} does not own worktree {branch}")
            head = self._branches[MAIN]
            self._branches[branch] = head
            wt.base = head
            wt.dirty.clear()
            return head

    def commit(self, branch: str, owner: str, message: str, timestamp: float) -> str:
        """Commit the dirty overlay; author must be the worktree owner."""
        with self._lock:
            wt = self.worktree(branch)
            if wt.owner != owner:
                raise OwnershipError(f"{owner} does not own worktree {branch}")
            if not wt.dirty:
                raise EmptyCommitError(branch)
            files = self.worktree_files(branch)
            commit = Commit.build(self._branches[branch], files, message, owner, timestamp)
            self._commits[commit.id] = commit
            self._branches[branch] = commit.id
            wt.dirty.clear()
            return commit.id

    # -- rebase and merge -----------------------------------------------------

    def rebase_preview(
        self, branch: str, onto: str = MAIN
    ) -> tuple[MergeStatus, list[tuple[str, str, dict[str, str]]]]:
        """Simulate replaying branch commits onto ``onto`` without mutating.

        Returns the merge status plus, when clean, the replayed commit plan as
        (message, author, tree) triples, oldest first.
        """
        with self._lock:
            base = self.merge_base(branch, onto)
            todo = self.commits_since(branch, base)
            current = dict(self._resolve(onto).files)
            plan: list[tuple[str, str, dict[str, str]]] = []
            for commit in todo:
                parent_files = self._commits[commit.parent].files if commit.parent else {}
                merged, conflicts = merge_trees(parent_files, current, commit.files)
                if merged is None:
                    return MergeStatus(clean=False, conflicts=conflicts), []
                current = merged
                plan.append((commit.message, commit.author, merged))
            return MergeStatus(clean=True), plan

    def rebase_onto_main(self, branch: str, timestamp: float) -> MergeStatus:
        """Replay branch commits atop the main head (mutates the branch when clean)."""
        return self.rebase_onto(branch, MAIN, timestamp)

    def rebase_onto(self, branch: str, onto: str, timestamp: float) -> MergeStatus:
        """Generalized rebase used for both main and staging targets."""
        with self._lock:
            if branch == MAIN:
                raise ProtectedBranchError("main cannot be rebased")
            status, plan = self.rebase_preview(branch, onto)
            if not status.clean:
                return status
            head = self.head_of(onto)
            for message, author, files in plan:
                commit = Commit.build(head, files, message, author, timestamp)
                self._commits[commit.id] = commit
                head = commit.id
            self._branches[branch] = head
            wt = self._worktrees.get(branch)
            if wt is not None:
                wt.base = self.head_of(onto)
                tree = self._commits[head].files
                # An overlay entry that now matches the rebased tree is no
                # longer dirty.
                for path in [p for p, c in wt.dirty.items() if tree.get(p) == c]:
                    del wt.dirty[path]
            return status

    def merge_to_main(self, branch: str) -> tuple[str, Diff]:
        """Fast-forward main to a branch that was rebased onto the main head."""
        with self._lock:
            head = self.head_of(branch)
            main_head = self.main_head()
            if main_head not in self._history(head):
                raise NotFastForwardError(branch)
            diff = compute_diff(self._commits[main_head].files, self._commits[head].files)
            self._branches[MAIN] = head
            return head, diff

    # -- staging helpers for batched merges ------------------------------------

    def create_branch_at(self, branch: str, commit_id: str) -> None:
        """Create a bare branch (no worktree) at a commit; used for staging."""
        with self._lock:
            if branch in self._branches:
                raise DuplicateBranchError(branch)
            if commit_id not in self._commits:
                raise UnknownCommitError(commit_id)
            self._branches[branch] = commit_id

    def delete_branch(self, branch: str) -> None:
        with self._lock:
            if branch == MAIN:
                raise ProtectedBranchError("main cannot be deleted")
            self._branches.pop(branch, None)

    def add_synthetic_commit(
        self, branch: str, files: Mapping[str, str], message: str, author: str, timestamp: float
    ) -> str:
        """Append a prebuilt tree to a bare branch (staging replays)."""
        with self._lock:
            if branch == MAIN:
                raise ProtectedBranchError("main only advances via merge_to_main")
            parent = self.head_of(branch)
            commit = Commit.build(parent, dict(files), message, author, timestamp)
            self._commits[commit.id] = commit
            self._branches[branch] = commit.id
            return commit.id

    # -- checkpoint serialization ----------------------------------------------

    def to_payload(self) -> dict:
        """Checkpoint form with structurally shared blobs."""
        with self._lock:
            blobs: dict[str, str] = {}
            commits = []
            order = sorted(self._commits.values(), key=lambda c: (c.timestamp, c.id))
            for commit in order:
                paths = {}
                for path, content in commit.files.items():
                    h = _hash_text(content)
                    blobs.setdefault(h, content)
                    paths[path] = h
                commits.append(
                    {
                        "id": commit.id,
                        "parent": commit.parent,
                        "message": commit.message,
                        "author": commit.author,
                        "timestamp": commit.timestamp,
                        "paths": paths,
                    }
                )
            return {
                "root": self._root,
                "blobs": blobs,
                "commits": commits,
                "branches": dict(self._branches),
                "worktrees": {b: wt.to_payload() for b, wt in self._worktrees.items()},
            }

    @staticmethod
    def from_payload(data: Mapping) -> "InMemoryVCS":
        blobs = data["blobs"]
        vcs = InMemoryVCS.__new__(InMemoryVCS)
        vcs._lock = threading.RLock()
        vcs._commits = {}
        for item in data["commits"]:
            files = {path: blobs[h] for path, h in item["paths"].items()}
            commit = Commit(
                id=item["id"],
                parent=item["parent"],
                files=files,
                message=item["message"],
                author=item["author"],
                timestamp=item["timestamp"],
                tree=tree_hash(files),
            )
            vcs._commits[commit.id] = commit
        vcs._branches = dict(data["branches"])
        vcs._worktrees = {b: Worktree.from_payload(w) for b, w in data["worktrees"].items()}
        vcs._root = data["root"]
        return vcs


class GitBackend:
    """Interface shared by the in-memory backend and the external adapter.

    The simulation only relies on the operations below; a deployment against
    a real repository implements them with subprocess calls.
    """

    def create_worktree(self, branch: str, owner: str):  # pragma: no cover - interface
        raise NotImplementedError

    def commit(self, branch: str, owner: str, message: str, timestamp: float):  # pragma: no cover
        raise NotImplementedError

    def rebase_onto_main(self, branch: str, timestamp: float):  # pragma: no cover
        raise NotImplementedError

    def merge_to_main(self, branch: str):  # pragma: no cover
        raise NotImplementedError

    def diff(self, from_ref: str, to_ref: str):  # pragma: no cover
        raise NotImplementedError


class ExternalGitAdapter(GitBackend):
    """Stub adapter mapping the backend contract onto git subprocess calls.

    Shipped unimplemented: each call documents the git invocation it stands
    for and raises.  ``timeout`` bounds each underlying command when a real
    implementation is wired in.
    """

    def __init__(self, repo_path: str, timeout: float = 120.0) -> None:
        self.repo_path = repo_path
        self.timeout = timeout

    def _unwired(self, op: str, argv: list[str]):
        raise NotImplementedError(
            f"external git adapter is a stub; {op} would run: git {' '.join(argv)}"
        )

    def create_worktree(self, branch: str, owner: str):
        self._unwired("create_worktree", ["worktree", "add", "-b", branch, f"../wt-{branch}"])

    def commit(self, branch: str, owner: str, message: str, timestamp: float):
        self._unwired("commit", ["commit", "-m", message, f"--author={owner}"])

    def rebase_onto_main(self, branch: str, timestamp: float):
        self._unwired("rebase_onto_main", ["rebase", MAIN, branch])

    def merge_to_main(self, branch: str):
        self._unwired("merge_to_main", ["merge", "--ff-only", branch])

    def diff(self, from_ref: str, to_ref: str):
        self._unwired("diff", ["diff", from_ref, to_ref])
