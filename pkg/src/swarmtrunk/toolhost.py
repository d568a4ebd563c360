"""Sandboxed tool surface agents use to observe and edit their worktrees.

Five tool families: file inspection/editing, checker access plus reference
corpus search, a git subset restricted to the caller's own branch, a small
allowlisted shell simulated over worktree state, and issue-tracker helpers.
Every result passes through one truncation gate: at most ``output_limit``
bytes survive, cut on a line boundary where possible and never inside a
multi-byte character, with a marker line appended and a flag set.

Dispatch is total: malformed calls, unknown tools, containment violations and
ownership violations all come back as error results, never exceptions.
"""

from __future__ import annotations

import posixpath
import re
import shlex
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from . import issues as issues_mod
from .checker import CachingChecker, parse_toy_file, target_status
from .vcs import InMemoryVCS, OwnershipError, VcsError

DEFAULT_OUTPUT_LIMIT = 64 * 1024
TRUNCATION_MARKER = "[output truncated]"

DEFAULT_SHELL_ALLOWLIST = (
    "build", "cat", "cut", "date", "echo", "grep", "head", "ls", "sort",
    "tail", "true", "uniq", "wc",
)

_FORBIDDEN_SHELL_TOKENS = (">", ">>", "<", ";", "&", "&&", "||")


@dataclass(frozen=True)
class ToolCall:
    """One request from an agent session."""

    tool: str
    args: Mapping
    caller: str
    branch: str


@dataclass(frozen=True)
class ToolResult:
    """Uniform result envelope; ``writes`` lists paths mutated by the call."""

    tool: str
    ok: bool
    output: str
    truncated: bool
    bytes_before_truncation: int
    error: Optional[str] = None
    writes: tuple[str, ...] = ()


def truncate_output(text: str, limit: int) -> tuple[str, bool, int]:
    """Clamp text to ``limit`` bytes of UTF-8.

    Returns (text, truncated, original_byte_length).  The cut lands on the
    last full line that fits; when even the first line is too long it lands
    on a character boundary instead.  The marker line is included in the
    budget, so len(result.encode()) <= limit always holds.
    """
    data = text.encode("utf-8")
    size = len(data)
    if size <= limit:
        return text, False, size
    marker = TRUNCATION_MARKER.encode("ascii")
    budget = max(limit - len(marker) - 1, 0)
    prefix = data[:budget]
    cut = prefix.rfind(b"\n")
    if cut < 0:
        cut = budget
        while cut > 0 and (data[cut] & 0xC0) == 0x80:
            cut -= 1
    out = data[:cut].decode("utf-8")
    if out:
        out += "\n"
    return out + TRUNCATION_MARKER, True, size


@dataclass
class ToolHostConfig:
    """Limits and allowlists for one run."""

    output_limit: int = DEFAULT_OUTPUT_LIMIT
    shell_allowlist: tuple[str, ...] = DEFAULT_SHELL_ALLOWLIST


class ToolHost:
    """Routes tool calls against the shared repository."""

    def __init__(
        self,
        vcs: InMemoryVCS,
        checker: CachingChecker,
        targets,
        reference: Optional[Mapping[str, str]] = None,
        config: Optional[ToolHostConfig] = None,
        clock: Callable[[], float] = lambda: 0.0,
    ) -> None:
        self.vcs = vcs
        self.checker = checker
        self.targets = tuple(targets)
        self.reference = dict(reference or {})
        self.config = config or ToolHostConfig()
        self.clock = clock
        self._review_grants: set[tuple[str, str]] = set()
        self._last_conflicts: dict[str, str] = {}
        self._registry: dict[str, tuple[Callable, bool]] = {
            # name -> (handler, requires_write)
            "file.list": (self._file_list, False),
            "file.read": (self._file_read, False),
            "file.write": (self._file_write, True),
            "file.replace": (self._file_replace, True),
            "file.edit_lines": (self._file_edit_lines, True),
            "file.copy_range": (self._file_copy_range, True),
            "file.cut_range": (self._file_cut_range, True),
            "check.build": (self._check_build, False),
            "check.status": (self._check_status, False),
            "check.snippet": (self._check_snippet, False),
            "ref.grep": (self._ref_grep, False),
            "ref.find": (self._ref_find, False),
            "git.status": (self._git_status, False),
            "git.log": (self._git_log, False),
            "git.diff": (self._git_diff, False),
            "git.commit": (self._git_commit, True),
            "git.rebase": (self._git_rebase, True),
            "git.reset": (self._git_reset, True),
            "git.restart": (self._git_restart, True),
            "git.conflicts": (self._git_conflicts, False),
            "issue.create": (self._issue_create, True),
            "issue.list": (self._issue_list, False),
            "issue.resolve": (self._issue_resolve, True),
            "shell.run": (self._shell_run, False),
        }

    # -- access control ----------------------------------------------------------

    def grant_review(self, caller: str, branch: str) -> None:
        """Allow read-only access to another agent's branch (PR review)."""
        self._review_grants.add((caller, branch))

    def revoke_review(self, caller: str, branch: str) -> None:
        self._review_grants.discard((caller, branch))

    def tool_names(self) -> tuple[str, ...]:
        return tuple(sorted(self._registry))

    # -- dispatch ----------------------------------------------------------------

    def dispatch(self, call: ToolCall, rng=None) -> ToolResult:
        """Run one tool call; always returns a ToolResult."""
        entry = self._registry.get(call.tool)
        if entry is None:
            return self._error(call, "unknown-tool", f"no such tool: {call.tool}")
        handler, needs_write = entry
        try:
            wt = self.vcs.worktree(call.branch)
        except VcsError:
            return self._error(call, "unknown-branch", f"no worktree: {call.branch}")
        owns = wt.owner == call.caller
        granted = (call.caller, call.branch) in self._review_grants
        if not owns and not granted:
            return self._error(call, "access-denied", f"{call.caller} has no access to {call.branch}")
        if needs_write and not owns:
            return self._error(
                call, "write-access", f"{call.caller} cannot write to {call.branch}"
            )
        try:
            output, writes = handler(call, rng)
        except _ToolFailure as exc:
            return self._error(call, exc.code, str(exc))
        except OwnershipError as exc:
            return self._error(call, "write-access", str(exc))
        text, truncated, size = truncate_output(output, self.config.output_limit)
        return ToolResult(
            tool=call.tool,
            ok=True,
            output=text,
            truncated=truncated,
            bytes_before_truncation=size,
            writes=tuple(writes),
        )

    def _error(self, call: ToolCall, code: str, message: str) -> ToolResult:
        text, truncated, size = truncate_output(message, self.config.output_limit)
        return ToolResult(
            tool=call.tool,
            ok=False,
            output=text,
            truncated=truncated,
            bytes_before_truncation=size,
            error=code,
        )

    # -- helpers -----------------------------------------------------------------

    def _files(self, call: ToolCall) -> dict[str, str]:
        return self.vcs.worktree_files(call.branch)

    @staticmethod
    def _norm_path(raw) -> str:
        path = str(raw)
        if path.startswith("/") or "\\" in path:
            raise _ToolFailure("path-escape", f"path outside worktree: {path!r}")
        norm = posixpath.normpath(path)
        if norm.startswith("..") or norm == ".":
            raise _ToolFailure("path-escape", f"path outside worktree: {path!r}")
        return norm

    @staticmethod
    def _arg(call: ToolCall, key: str, default=None, required: bool = False):
        if key in call.args:
            return call.args[key]
        if required:
            raise _ToolFailure("bad-args", f"{call.tool} requires {key!r}")
        return default

    @staticmethod
    def _int_arg(call: ToolCall, key: str, default=None, required: bool = False) -> Optional[int]:
        value = ToolHost._arg(call, key, default, required)
        if value is None:
            return None
        try:
            return int(value)
        except (TypeError, ValueError):
            raise _ToolFailure("bad-args", f"{key} must be an integer")

    # -- file family --------------------------------------------------------------

    def _file_list(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        prefix = str(self._arg(call, "prefix", ""))
        files = self._files(call)
        names = sorted(p for p in files if p.startswith(prefix))
        return "\n".join(names) + ("\n" if names else ""), []

    def _file_read(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        path = self._norm_path(self._arg(call, "path", required=True))
        files = self._files(call)
        if path not in files:
            raise _ToolFailure("not-found", f"no such file: {path}")
        lines = files[path].split("\n")
        start = self._int_arg(call, "start", 1) or 1
        end = self._int_arg(call, "end", len(lines)) or len(lines)
        start = max(1, start)
        end = min(len(lines), end)
        if start > end:
            return "", []
        return "\n".join(lines[start - 1 : end]), []

    def _file_write(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        path = self._norm_path(self._arg(call, "path", required=True))
        content = str(self._arg(call, "content", required=True))
        self.vcs.stage(call.branch, call.caller, path, content)
        return f"wrote {path}", [path]

    def _file_replace(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        path = self._norm_path(self._arg(call, "path", required=True))
        old = str(self._arg(call, "old", required=True))
        new = str(self._arg(call, "new", required=True))
        files = self._files(call)
        if path not in files:
            raise _ToolFailure("not-found", f"no such file: {path}")
        if old not in files[path]:
            raise _ToolFailure("no-match", f"pattern not found in {path}")
        self.vcs.stage(call.branch, call.caller, path, files[path].replace(old, new, 1))
        return f"edited {path}", [path]

    def _file_edit_lines(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        path = self._norm_path(self._arg(call, "path", required=True))
        start = self._int_arg(call, "start", required=True)
        end = self._int_arg(call, "end", required=True)
        new_lines = self._arg(call, "lines", required=True)
        if not isinstance(new_lines, (list, tuple)):
            raise _ToolFailure("bad-args", "lines must be a list")
        files = self._files(call)
        if path not in files:
            raise _ToolFailure("not-found", f"no such file: {path}")
        lines = files[path].split("\n")
        if not (1 <= start <= end <= len(lines)):
            raise _ToolFailure("bad-args", f"range {start}-{end} out of bounds")
        lines[start - 1 : end] = [str(l) for l in new_lines]
        self.vcs.stage(call.branch, call.caller, path, "\n".join(lines))
        return f"edited {path}:{start}-{end}", [path]

    def _read_range(self, call: ToolCall, path_key: str, start_key: str, end_key: str):
        path = self._norm_path(self._arg(call, path_key, required=True))
        files = self._files(call)
        if path not in files:
            raise _ToolFailure("not-found", f"no such file: {path}")
        lines = files[path].split("\n")
        start = self._int_arg(call, start_key, required=True)
        end = self._int_arg(call, end_key, required=True)
        if not (1 <= start <= end <= len(lines)):
            raise _ToolFailure("bad-args", f"range {start}-{end} out of bounds")
        return path, lines, start, end

    def _file_copy_range(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        src, lines, start, end = self._read_range(call, "src", "start", "end")
        dest = self._norm_path(self._arg(call, "dest", required=True))
        at = self._int_arg(call, "at", required=True)
        files = self._files(call)
        dest_lines = files.get(dest, "").split("\n") if dest in files else []
        if not (0 <= at <= len(dest_lines)):
            raise _ToolFailure("bad-args", f"insert point {at} out of bounds")
        chunk = lines[start - 1 : end]
        dest_lines[at:at] = chunk
        self.vcs.stage(call.branch, call.caller, dest, "\n".join(dest_lines))
        return f"copied {src}:{start}-{end} to {dest}@{at}", [dest]

    def _file_cut_range(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        src, lines, start, end = self._read_range(call, "src", "start", "end")
        dest = self._norm_path(self._arg(call, "dest", required=True))
        at = self._int_arg(call, "at", required=True)
        if src == dest:
            raise _ToolFailure("bad-args", "cut within one file is not supported")
        files = self._files(call)
        dest_lines = files.get(dest, "").split("\n") if dest in files else []
        if not (0 <= at <= len(dest_lines)):
            raise _ToolFailure("bad-args", f"insert point {at} out of bounds")
        chunk = lines[start - 1 : end]
        remaining = lines[: start - 1] + lines[end:]
        dest_lines[at:at] = chunk
        self.vcs.stage(call.branch, call.caller, src, "\n".join(remaining))
        self.vcs.stage(call.branch, call.caller, dest, "\n".join(dest_lines))
        return f"moved {src}:{start}-{end} to {dest}@{at}", [src, dest]

    # -- check family ---------------------------------------------------------------

    def _check_build(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        report = self.checker.check(self._files(call))
        return report.render(), []

    def _check_status(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        names = self._arg(call, "names", required=True)
        if not isinstance(names, (list, tuple)):
            raise _ToolFailure("bad-args", "names must be a list")
        report = self.checker.check(self._files(call))
        by_name = {d.name: d for d in report.decls}
        lines = []
        for name in names:
            decl = by_name.get(str(name))
            if decl is None:
                lines.append(f"{name} absent")
            else:
                lines.append(f"{name} {decl.body}")
        return "\n".join(lines), []

    def _check_snippet(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        text = str(self._arg(call, "text", required=True))
        parsed = parse_toy_file("<snippet>", text)
        if parsed.errors:
            return "\n".join(e.render() for e in parsed.errors), []
        report = self.checker.check(self._files(call))
        unknown = sorted(
            {dep for d in parsed.decls for dep in d.deps}
            - report.decl_names
            - {d.name for d in parsed.decls}
        )
        if unknown:
            return "unknown deps: " + ", ".join(unknown), []
        return f"snippet ok: {len(parsed.decls)} decls", []

    def _ref_grep(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        pattern = str(self._arg(call, "pattern", required=True))
        try:
            rx = re.compile(pattern)
        except re.error as exc:
            raise _ToolFailure("bad-args", f"bad pattern: {exc}")
        out = []
        for path in sorted(self.reference):
            for i, line in enumerate(self.reference[path].split("\n"), start=1):
                if rx.search(line):
                    out.append(f"{path}:{i}: {line}")
        return "\n".join(out), []

    def _ref_find(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        name = str(self._arg(call, "name", required=True))
        hits = sorted(p for p, text in self.reference.items() if name in text)
        return "\n".join(hits), []

    # -- git family -------------------------------------------------------------------

    def _git_status(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        wt = self.vcs.worktree(call.branch)
        dirty = sorted(wt.dirty)
        lines = [f"branch {call.branch}", f"base {wt.base}"]
        lines += [f"dirty {p}" for p in dirty]
        return "\n".join(lines), []

    def _git_log(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        limit = self._int_arg(call, "limit", 10) or 10
        state = self.vcs.snapshot(call.branch)
        out = []
        for cid in reversed(state.history[-limit:]):
            commit = self.vcs.commit_object(cid)
            out.append(f"{cid[:12]} {commit.author}: {commit.message}")
        return "\n".join(out), []

    def _git_diff(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        against = str(self._arg(call, "against", "base"))
        wt = self.vcs.worktree(call.branch)
        if against == "base":
            old = self.vcs.commit_object(wt.base).files
        elif against == "main":
            old = self.vcs.snapshot("main").files
        else:
            raise _ToolFailure("bad-args", "against must be 'base' or 'main'")
        from .vcs import compute_diff

        diff = compute_diff(old, self._files(call))
        out = []
        for fd in diff.files:
            out.append(f"=== {fd.op} {fd.path}")
            for hunk in fd.hunks:
                out.append(f"@@ -{hunk.old_start + 1},{len(hunk.old_lines)} +{hunk.new_start + 1},{len(hunk.new_lines)}")
                out.extend(f"-{l}" for l in hunk.old_lines)
                out.extend(f"+{l}" for l in hunk.new_lines)
        out.append(f"added {diff.added_lines} removed {diff.removed_lines}")
        return "\n".join(out), []

    def _git_commit(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        message = str(self._arg(call, "message", required=True))
        try:
            cid = self.vcs.commit(call.branch, call.caller, message, timestamp=self.clock())
        except VcsError as exc:
            raise _ToolFailure("git-error", str(exc))
        return f"committed {cid[:12]}", []

    def _git_rebase(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        status = self.vcs.rebase_onto_main(call.branch, timestamp=self.clock())
        if status.clean:
            self._last_conflicts.pop(call.branch, None)
            return "rebase clean", []
        detail = "\n".join(f"{c.path}: {c.detail}" for c in status.conflicts)
        self._last_conflicts[call.branch] = detail
        return f"rebase conflicts:\n{detail}", []

    def _git_reset(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        self.vcs.reset_worktree(call.branch, call.caller)
        return "reset", []

    def _git_restart(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        base = self.vcs.restart_branch(call.branch, call.caller)
        self._last_conflicts.pop(call.branch, None)
        return f"restarted from {base[:12]}", []

    def _git_conflicts(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        return self._last_conflicts.get(call.branch, "no recorded conflicts"), []

    # -- issue family -----------------------------------------------------------------

    def _issue_create(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        if rng is None:
            raise _ToolFailure("bad-args", "issue.create requires a session rng")
        title = str(self._arg(call, "title", required=True))
        body = str(self._arg(call, "body", ""))
        kind = str(self._arg(call, "kind", required=True))
        ref = str(self._arg(call, "ref", ""))
        try:
            issue = issues_mod.make_issue(rng, call.caller, title, body, kind, ref)
        except issues_mod.IssueError as exc:
            raise _ToolFailure("bad-args", str(exc))
        self.vcs.stage(call.branch, call.caller, issue.path, issues_mod.render_issue(issue))
        return issue.id, [issue.path]

    def _issue_list(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        status = self._arg(call, "status")
        kind = self._arg(call, "kind")
        items = issues_mod.list_issues(self._files(call), status=status, kind=kind)
        if self._arg(call, "full"):
            lines = [
                f"{i.id} {i.status} {i.kind} ref={i.ref or '-'} {i.title}" for i in items
            ]
            lines.append(f"total: {len(items)}")
            return "\n".join(lines) + "\n", []
        return issues_mod.render_issue_listing(items), []

    def _issue_resolve(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        issue_id = str(self._arg(call, "id", required=True))
        by = str(self._arg(call, "by", call.branch))
        try:
            path, content = issues_mod.mark_resolved(self._files(call), issue_id, by)
        except issues_mod.IssueError as exc:
            raise _ToolFailure("issue-error", str(exc))
        self.vcs.stage(call.branch, call.caller, path, content)
        return f"resolved {issue_id}", [path]

    # -- shell family -----------------------------------------------------------------

    def _shell_run(self, call: ToolCall, rng) -> tuple[str, list[str]]:
        cmdline = str(self._arg(call, "cmd", required=True))
        for token in _FORBIDDEN_SHELL_TOKENS:
            if token in cmdline:
                raise _ToolFailure("shell-denied", f"operator {token!r} is not allowed")
        try:
            tokens = shlex.split(cmdline)
        except ValueError as exc:
            raise _ToolFailure("bad-args", f"cannot parse command: {exc}")
        if not tokens:
            raise _ToolFailure("bad-args", "empty command")
        stages: list[list[str]] = [[]]
        for token in tokens:
            if token == "|":
                if not stages[-1]:
                    raise _ToolFailure("bad-args", "empty pipeline stage")
                stages.append([])
            else:
                stages[-1].append(token)
        if not stages[-1]:
            raise _ToolFailure("bad-args", "empty pipeline stage")
        files = self._files(call)
        text = ""
        for argv in stages:
            name = argv[0]
            if name not in self.config.shell_allowlist:
                raise _ToolFailure("shell-denied", f"command {name!r} is not allowlisted")
            runner = getattr(self, f"_sh_{name}", None)
            if runner is None:
                raise _ToolFailure("shell-denied", f"command {name!r} is not available here")
            text = runner(argv[1:], text, files)
        return text, []

    def _resolve_shell_paths(self, args: Sequence[str], files: Mapping[str, str]) -> list[str]:
        paths = []
        for raw in args:
            path = self._norm_path(raw)
            if path not in files:
                raise _ToolFailure("not-found", f"no such file: {path}")
            paths.append(path)
        return paths

    def _sh_cat(self, args, stdin, files):
        if not args:
            return stdin
        return "".join(files[p] for p in self._resolve_shell_paths(args, files))

    def _sh_head(self, args, stdin, files):
        n, rest = self._parse_head_count(args, 10)
        text = stdin if not rest else "".join(files[p] for p in self._resolve_shell_paths(rest, files))
        return "\n".join(text.split("\n")[:n]) + "\n" if text else ""

    def _sh_tail(self, args, stdin, files):
        n, rest = self._parse_head_count(args, 10)
        text = stdin if not rest else "".join(files[p] for p in self._resolve_shell_paths(rest, files))
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return "\n".join(lines[-n:]) + "\n" if lines else ""

    @staticmethod
    def _parse_head_count(args, default):
        args = list(args)
        n = default
        if args and args[0] == "-n":
            if len(args) < 2:
                raise _ToolFailure("bad-args", "-n needs a value")
            try:
                n = int(args[1])
            except ValueError:
                raise _ToolFailure("bad-args", "-n needs an integer")
            args = args[2:]
        elif args and args[0].startswith("-n"):
            try:
                n = int(args[0][2:])
            except ValueError:
                raise _ToolFailure("bad-args", "-n needs an integer")
            args = args[1:]
        return n, args

    def _sh_wc(self, args, stdin, files):
        args = list(args)
        lines_only = "-l" in args
        rest = [a for a in args if a != "-l"]
        text = stdin if not rest else "".join(files[p] for p in self._resolve_shell_paths(rest, files))
        n_lines = text.count("\n")
        if lines_only:
            return f"{n_lines}\n"
        words = len(text.split())
        return f"{n_lines} {words} {len(text.encode('utf-8'))}\n"

    def _sh_grep(self, args, stdin, files):
        args = list(args)
        ignore = "-i" in args
        args = [a for a in args if a != "-i"]
        if not args:
            raise _ToolFailure("bad-args", "grep needs a pattern")
        try:
            rx = re.compile(args[0], re.IGNORECASE if ignore else 0)
        except re.error as exc:
            raise _ToolFailure("bad-args", f"bad pattern: {exc}")
        rest = args[1:]
        out = []
        if rest:
            paths = self._resolve_shell_paths(rest, files)
            for path in paths:
                for line in files[path].split("\n"):
                    if rx.search(line):
                        out.append(f"{path}:{line}" if len(paths) > 1 else line)
        else:
            out = [l for l in stdin.split("\n") if rx.search(l)]
        return "\n".join(out) + "\n" if out else ""

    def _sh_sort(self, args, stdin, files):
        args = list(args)
        rev = "-r" in args
        rest = [a for a in args if a != "-r"]
        text = stdin if not rest else "".join(files[p] for p in self._resolve_shell_paths(rest, files))
        lines = [l for l in text.split("\n") if l != ""]
        return "\n".join(sorted(lines, reverse=rev)) + "\n" if lines else ""

    def _sh_uniq(self, args, stdin, files):
        count = "-c" in args
        lines = [l for l in stdin.split("\n") if l != ""]
        out = []
        prev = None
        n = 0
        for line in lines + [None]:
            if line == prev:
                n += 1
                continue
            if prev is not None:
                out.append(f"{n:7d} {prev}" if count else prev)
            prev, n = line, 1
        return "\n".join(out) + "\n" if out else ""

    def _sh_cut(self, args, stdin, files):
        args = list(args)
        delim = "\t"
        fields: list[int] = []
        i = 0
        while i < len(args):
            if args[i] == "-d" and i + 1 < len(args):
                delim = args[i + 1]
                i += 2
            elif args[i] == "-f" and i + 1 < len(args):
                try:
                    fields = [int(f) for f in args[i + 1].split(",")]
                except ValueError:
                    raise _ToolFailure("bad-args", "-f needs integers")
                i += 2
            else:
                raise _ToolFailure("bad-args", f"cut: unsupported arg {args[i]!r}")
        if not fields:
            raise _ToolFailure("bad-args", "cut needs -f")
        out = []
        for line in stdin.split("\n"):
            if line == "":
                continue
            parts = line.split(delim)
            out.append(delim.join(parts[f - 1] for f in fields if 0 < f <= len(parts)))
        return "\n".join(out) + "\n" if out else ""

    def _sh_ls(self, args, stdin, files):
        prefix = ""
        if args:
            prefix = self._norm_path(args[0])
            if prefix and not prefix.endswith("/"):
                prefix += "/"
        entries = set()
        for path in files:
            if not path.startswith(prefix):
                continue
            rest = path[len(prefix) :]
            head = rest.split("/", 1)
            entries.add(head[0] + "/" if len(head) > 1 else head[0])
        return "\n".join(sorted(entries)) + "\n" if entries else ""

    def _sh_echo(self, args, stdin, files):
        return " ".join(args) + "\n"

    def _sh_true(self, args, stdin, files):
        return ""

    def _sh_date(self, args, stdin, files):
        return f"t+{self.clock():.3f}s\n"

    def _sh_build(self, args, stdin, files):
        return self.checker.check(files).render() + "\n"


class _ToolFailure(Exception):
    """Internal: converted to an error ToolResult by dispatch."""

    def __init__(self, code: str, message: str) -> None:
        super().__init__(message)
        self.code = code


class ExternalAgentAdapter:
    """Stub interface to a real LLM agent backend.

    A live deployment maps (conversation, tool results) to the next action
    and reports true token usage; the simulation uses scripted policies plus
    synthesized usage instead.
    """

    def __init__(self, model: str = "unset", timeout: float = 600.0) -> None:
        self.model = model
        self.timeout = timeout

    def next_action(self, conversation, tools):
        raise NotImplementedError("external agent adapter is a stub in this build")
