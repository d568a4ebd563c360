"""Checker for the toy proof language used as the build gate of a run.

Source files end in ``.toy``.  A file starts with zero or more ``import``
lines naming other source files, followed by one declaration per line:

    def NAME needs A,B.
    thm NAME needs A,B. proof.
    thm NAME needs A,B. sorry.

A declaration may end with a bracketed marker list such as ``[cited]`` or
``[exercise]``.  ``sorry`` is an admitted-proof placeholder: it is legal and
is counted, never an error.  The checker enforces parseability, unique names
across the repository, and define-before-use where "before" means earlier in
the same file or anywhere in a (transitively) imported file.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

TOY_SUFFIX = ".toy"

KIND_DEF = "def"
KIND_THM = "thm"

BODY_PROVED = "proved"
BODY_SORRY = "sorry"

MARKER_CITED = "cited"
MARKER_EXERCISE = "exercise"
MARKERS = frozenset({MARKER_CITED, MARKER_EXERCISE})

STATUS_MISSING = "missing"
STATUS_STATED = "stated"
STATUS_PROVED = "proved"
STATUS_EXCLUDED = "excluded"

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_']*")
_DECL_RE = re.compile(
    r"^(?P<kind>def|thm)\s+(?P<name>[A-Za-z_][A-Za-z0-9_']*)\s+needs\s*"
    r"(?P<deps>[^.]*)\.(?:\s*(?P<body>proof|sorry)\s*\.)?"
    r"(?:\s*\[(?P<markers>[a-z, ]+)\])?\s*$"
)


@dataclass(frozen=True)
class ToyDecl:
    """One parsed declaration."""

    kind: str
    name: str
    deps: tuple[str, ...]
    body: str
    markers: frozenset[str]
    path: str
    line: int

    @property
    def is_obligation(self) -> bool:
        """True when the decl still owes a proof (cited/exercise never do)."""
        return self.body == BODY_SORRY and not (self.markers & MARKERS)


@dataclass(frozen=True)
class CheckError:
    """One diagnostic with a stable location."""

    path: str
    line: int
    message: str

    def render(self) -> str:
        return f"{self.path}:{self.line}: {self.message}"


@dataclass(frozen=True)
class CheckReport:
    """Result of checking a whole tree."""

    ok: bool
    errors: tuple[CheckError, ...]
    decl_count: int
    sorry_count: int
    decl_names: frozenset[str]
    decls: tuple[ToyDecl, ...] = ()

    def render(self) -> str:
        if self.ok:
            return (
                f"ok: {self.decl_count} decls, {self.sorry_count} sorries"
            )
        lines = [e.render() for e in self.errors]
        lines.append(f"failed: {len(self.errors)} errors")
        return "\n".join(lines)


@dataclass(frozen=True)
class ParsedFile:
    """Declarations and imports of one source file."""

    path: str
    imports: tuple[str, ...]
    decls: tuple[ToyDecl, ...]
    errors: tuple[CheckError, ...]


def parse_toy_file(path: str, text: str) -> ParsedFile:
    """Parse one file; collects errors instead of raising."""
    imports: list[str] = []
    decls: list[ToyDecl] = []
    errors: list[CheckError] = []
    seen_decl = False
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("import "):
            target = line[len("import ") :].strip()
            if seen_decl:
                errors.append(CheckError(path, lineno, "import after declarations"))
            elif not target:
                errors.append(CheckError(path, lineno, "empty import path"))
            else:
                imports.append(target)
            continue
        match = _DECL_RE.match(line)
        if match is None:
            errors.append(CheckError(path, lineno, f"cannot parse declaration: {line!r}"))
            continue
        kind = match.group("kind")
        body = match.group("body")
        if kind == KIND_DEF and body is not None:
            errors.append(CheckError(path, lineno, "def takes no proof body"))
            continue
        if kind == KIND_THM and body is None:
            errors.append(CheckError(path, lineno, "thm requires a proof or sorry body"))
            continue
        deps_raw = match.group("deps").strip()
        deps = tuple(d.strip() for d in deps_raw.split(",") if d.strip())
        bad = [d for d in deps if not _NAME_RE.fullmatch(d)]
        if bad:
            errors.append(CheckError(path, lineno, f"invalid dependency name: {bad[0]!r}"))
            continue
        markers_raw = match.group("markers")
        markers: frozenset[str] = frozenset()
        if markers_raw is not None:
            markers = frozenset(m.strip() for m in markers_raw.split(",") if m.strip())
            unknown = markers - MARKERS
            if unknown:
                errors.append(
                    CheckError(path, lineno, f"unknown marker: {sorted(unknown)[0]!r}")
                )
                continue
        decls.append(
            ToyDecl(
                kind=kind,
                name=match.group("name"),
                deps=deps,
                body=BODY_PROVED if body in (None, "proof") else BODY_SORRY,
                markers=markers,
                path=path,
                line=lineno,
            )
        )
        seen_decl = True
    return ParsedFile(path=path, imports=tuple(imports), decls=tuple(decls), errors=tuple(errors))


def _toy_paths(files: Mapping[str, str]) -> list[str]:
    return sorted(p for p in files if p.endswith(TOY_SUFFIX))


def _transitive_imports(
    parsed: Mapping[str, ParsedFile]
) -> tuple[dict[str, frozenset[str]], list[CheckError]]:
    """Transitive import closure per file, with cycle and resolution errors."""
    errors: list[CheckError] = []
    closure: dict[str, frozenset[str]] = {}
    state: dict[str, int] = {}  # 0 visiting, 1 done

    def visit(path: str, stack: tuple[str, ...]) -> frozenset[str]:
        if state.get(path) == 1:
            return closure[path]
        if state.get(path) == 0:
            cycle = " -> ".join(stack[stack.index(path) :] + (path,))
            errors.append(CheckError(path, 1, f"import cycle: {cycle}"))
            return frozenset()
        state[path] = 0
        acc: set[str] = set()
        for target in parsed[path].imports:
            if target not in parsed:
                line = 1 + parsed[path].imports.index(target)
                errors.append(CheckError(path, line, f"import of missing file {target!r}"))
                continue
            acc.add(target)
            acc |= visit(target, stack + (path,))
        state[path] = 1
        closure[path] = frozenset(acc)
        return closure[path]

    for path in sorted(parsed):
        visit(path, ())
    return closure, errors


def check(files: Mapping[str, str]) -> CheckReport:
    """Check every ``.toy`` file in a tree.

    Deterministic: identical trees produce identical reports.
    """
    parsed: dict[str, ParsedFile] = {
        path: parse_toy_file(path, files[path]) for path in _toy_paths(files)
    }
    errors: list[CheckError] = []
    for path in sorted(parsed):
        errors.extend(parsed[path].errors)

    closure, import_errors = _transitive_imports(parsed)
    errors.extend(import_errors)

    all_decls: list[ToyDecl] = [d for path in sorted(parsed) for d in parsed[path].decls]
    by_name: dict[str, ToyDecl] = {}
    for decl in all_decls:
        first = by_name.get(decl.name)
        if first is not None:
            errors.append(
                CheckError(
                    decl.path,
                    decl.line,
                    f"duplicate declaration {decl.name!r} (first at {first.path}:{first.line})",
                )
            )
        else:
            by_name[decl.name] = decl

    # Define-before-use: earlier in the same file, or anywhere in an import.
    for path in sorted(parsed):
        visible: set[str] = set()
        for imported in closure.get(path, frozenset()):
            visible.update(d.name for d in parsed[imported].decls)
        for decl in parsed[path].decls:
            for dep in decl.deps:
                if dep not in visible:
                    errors.append(
                        CheckError(
                            decl.path,
                            decl.line,
                            f"{decl.name!r} uses {dep!r} before its definition",
                        )
                    )
            visible.add(decl.name)

    errors_sorted = tuple(sorted(errors, key=lambda e: (e.path, e.line, e.message)))
    sorry_count = sum(1 for d in all_decls if d.body == BODY_SORRY)
    return CheckReport(
        ok=not errors_sorted,
        errors=errors_sorted,
        decl_count=len(all_decls),
        sorry_count=sorry_count,
        decl_names=frozenset(by_name),
        decls=tuple(all_decls),
    )


class CachingChecker:
    """check() memoized on the content of the .toy subset of a tree."""

    def __init__(self, max_entries: int = 4096) -> None:
        self._cache: dict[str, CheckReport] = {}
        self._max = max_entries

    def _key(self, files: Mapping[str, str]) -> str:
        digest = hashlib.sha256()
        for path in _toy_paths(files):
            digest.update(path.encode("utf-8"))
            digest.update(b"\x00")
            digest.update(files[path].encode("utf-8"))
            digest.update(b"\x01")
        return digest.hexdigest()

    def check(self, files: Mapping[str, str]) -> CheckReport:
        key = self._key(files)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        report = check(files)
        if len(self._cache) >= self._max:
            self._cache.clear()
        self._cache[key] = report
        return report


@dataclass(frozen=True)
class TargetSpec:
    """One entry of the source-of-truth target list."""

    name: str
    chapter: str
    kind: str
    markers: frozenset[str] = frozenset()

    @property
    def excluded(self) -> bool:
        return bool(self.markers & MARKERS)

    def render(self) -> str:
        suffix = f" {','.join(sorted(self.markers))}" if self.markers else ""
        return f"{self.name} {self.chapter} {self.kind}{suffix}"


def parse_target_list(text: str) -> tuple[TargetSpec, ...]:
    """Parse the target list: one ``name chapter kind [markers]`` per line."""
    targets: list[TargetSpec] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ValueError(f"targets:{lineno}: expected 'name chapter kind [markers]'")
        name, chapter, kind = parts[:3]
        if kind not in (KIND_DEF, KIND_THM):
            raise ValueError(f"targets:{lineno}: unknown kind {kind!r}")
        markers: frozenset[str] = frozenset()
        if len(parts) == 4:
            markers = frozenset(m for m in parts[3].split(",") if m)
            unknown = markers - MARKERS
            if unknown:
                raise ValueError(f"targets:{lineno}: unknown marker {sorted(unknown)[0]!r}")
        if name in seen:
            raise ValueError(f"targets:{lineno}: duplicate target {name!r}")
        seen.add(name)
        targets.append(TargetSpec(name=name, chapter=chapter, kind=kind, markers=markers))
    return tuple(targets)


def render_target_list(targets: Sequence[TargetSpec]) -> str:
    return "\n".join(t.render() for t in targets) + "\n"


def target_status(
    report: CheckReport, targets: Sequence[TargetSpec]
) -> dict[str, str]:
    """Per-target status: missing, stated, proved, or excluded.

    Exclusion comes from the target list, not from source markers; a def is
    proved by existing since defs carry no proof obligation.
    """
    by_name = {d.name: d for d in report.decls}
    out: dict[str, str] = {}
    for target in targets:
        if target.excluded:
            out[target.name] = STATUS_EXCLUDED
            continue
        decl = by_name.get(target.name)
        if decl is None:
            out[target.name] = STATUS_MISSING
        elif decl.body == BODY_SORRY:
            out[target.name] = STATUS_STATED
        else:
            out[target.name] = STATUS_PROVED
    return out


def status_counts(statuses: Mapping[str, str]) -> dict[str, int]:
    counts = {s: 0 for s in (STATUS_MISSING, STATUS_STATED, STATUS_PROVED, STATUS_EXCLUDED)}
    for status in statuses.values():
        counts[status] += 1
    return counts


class ExternalCheckerAdapter:
    """Stub interface to a real prover toolchain.

    Accepts snippet checks and whole-tree builds; unimplemented by default,
    with ``timeout`` bounding each call when wired to a real backend.
    """

    def __init__(self, timeout: float = 600.0) -> None:
        self.timeout = timeout

    def check_snippet(self, snippet: str, context_files: Mapping[str, str]):
        raise NotImplementedError("external checker adapter is a stub in this build")

    def check_build(self, files: Mapping[str, str]):
        raise NotImplementedError("external checker adapter is a stub in this build")
