"""Scenario corpora: the source material a swarm formalizes during a run.

A corpus is a list of chapter chunks.  Each chunk declares the defs and thms
a sketcher should state (with ``sorry`` bodies for thms), the imports between
chapter files, and which decls are run targets.  The generator also owns the
ground truth the simulation needs but agents cannot see in the repository:

* ``hidden_deps``: thms that additionally require a helper decl nobody has
  written yet.  A scripted prover hitting one files a blocker and stops.
* ``helpers``: the missing decls themselves, which a maintainer can add.
* ``duplicates``: seeded near-duplicate defs for scan agents to find.

Generated corpora are solvable by construction: declared dependencies only
point at earlier decls, excluded (cited/exercise) decls are never depended
on, and every helper is a dependency-free def.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .checker import (
    KIND_DEF,
    KIND_THM,
    MARKER_CITED,
    MARKER_EXERCISE,
    TargetSpec,
    parse_target_list,
    render_target_list,
)

_TOPICS = (
    "sets", "maps", "orders", "groups", "rings", "fields", "graphs", "trees",
    "flows", "perms", "lattices", "measures", "bounds", "counts", "walks",
    "tilings", "matchings", "spectra", "codes", "designs", "posets", "chains",
    "cuts", "cycles", "kernels", "ideals", "norms", "traces", "covers", "paths",
)


@dataclass(frozen=True)
class ChunkDecl:
    """One decl a sketcher must state."""

    name: str
    kind: str
    deps: tuple[str, ...]
    markers: frozenset[str] = frozenset()
    target: bool = True

    def to_payload(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "deps": list(self.deps),
            "markers": sorted(self.markers),
            "target": self.target,
        }

    @staticmethod
    def from_payload(data: Mapping) -> "ChunkDecl":
        return ChunkDecl(
            name=data["name"],
            kind=data["kind"],
            deps=tuple(data["deps"]),
            markers=frozenset(data["markers"]),
            target=bool(data["target"]),
        )


@dataclass(frozen=True)
class ChunkSpec:
    """One chapter of source material."""

    chapter: str
    topic: str
    path: str
    imports: tuple[str, ...]
    decls: tuple[ChunkDecl, ...]

    def to_payload(self) -> dict:
        return {
            "chapter": self.chapter,
            "topic": self.topic,
            "path": self.path,
            "imports": list(self.imports),
            "decls": [d.to_payload() for d in self.decls],
        }

    @staticmethod
    def from_payload(data: Mapping) -> "ChunkSpec":
        return ChunkSpec(
            chapter=data["chapter"],
            topic=data["topic"],
            path=data["path"],
            imports=tuple(data["imports"]),
            decls=tuple(ChunkDecl.from_payload(d) for d in data["decls"]),
        )


@dataclass(frozen=True)
class HelperSpec:
    """A decl missing from every chunk that a maintainer can supply."""

    name: str
    path: str

    def to_payload(self) -> dict:
        return {"name": self.name, "path": self.path}


@dataclass(frozen=True)
class DuplicateSpec:
    """A seeded near-duplicate: ``alt`` shadows ``original``."""

    alt: str
    original: str
    original_path: str

    def to_payload(self) -> dict:
        return {"alt": self.alt, "original": self.original, "original_path": self.original_path}


@dataclass(frozen=True)
class Scenario:
    """A full corpus plus the harness-side ground truth."""

    chunks: tuple[ChunkSpec, ...]
    targets: tuple[TargetSpec, ...]
    helpers: tuple[HelperSpec, ...]
    hidden_deps: Mapping[str, tuple[str, ...]]
    duplicates: tuple[DuplicateSpec, ...]

    def chunk_by_path(self, path: str) -> ChunkSpec:
        for chunk in self.chunks:
            if chunk.path == path:
                return chunk
        raise KeyError(path)

    def helper_by_name(self, name: str) -> HelperSpec:
        for helper in self.helpers:
            if helper.name == name:
                return helper
        raise KeyError(name)

    @property
    def target_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.targets)

    def to_payload(self) -> dict:
        return {
            "chunks": [c.to_payload() for c in self.chunks],
            "targets": render_target_list(self.targets),
            "helpers": [h.to_payload() for h in self.helpers],
            "hidden_deps": {k: list(v) for k, v in sorted(self.hidden_deps.items())},
            "duplicates": [d.to_payload() for d in self.duplicates],
        }

    @staticmethod
    def from_payload(data: Mapping) -> "Scenario":
        return Scenario(
            chunks=tuple(ChunkSpec.from_payload(c) for c in data["chunks"]),
            targets=parse_target_list(data["targets"]),
            helpers=tuple(HelperSpec(h["name"], h["path"]) for h in data["helpers"]),
            hidden_deps={k: tuple(v) for k, v in data["hidden_deps"].items()},
            duplicates=tuple(
                DuplicateSpec(d["alt"], d["original"], d["original_path"])
                for d in data["duplicates"]
            ),
        )

    def content_hash(self) -> str:
        canon = json.dumps(self.to_payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def sketch_source(chunk: ChunkSpec) -> str:
    """The toy file a faithful sketcher writes for a chunk."""
    lines = [f"# {chunk.chapter}: {chunk.topic}"]
    lines.extend(f"import {path}" for path in chunk.imports)
    for decl in chunk.decls:
        deps = ",".join(decl.deps) if decl.deps else ""
        marker = f" [{','.join(sorted(decl.markers))}]" if decl.markers else ""
        if decl.kind == KIND_DEF:
            lines.append(f"def {decl.name} needs {deps}.{marker}")
        else:
            lines.append(f"thm {decl.name} needs {deps}. sorry.{marker}")
    return "\n".join(lines) + "\n"


def helper_source_line(helper: HelperSpec) -> str:
    return f"def {helper.name} needs ."


def generate_scenario(
    seed: int,
    chapters: int = 8,
    decls_per_chapter: int = 10,
    thm_ratio: float = 0.7,
    excluded: int = 2,
    hidden_helpers: int = 2,
    duplicate_pairs: int = 1,
) -> Scenario:
    """Deterministically generate a solvable corpus."""
    if chapters > len(_TOPICS):
        raise ValueError(f"at most {len(_TOPICS)} chapters supported")
    rng = random.Random(f"corpus/{seed}")
    chunks: list[ChunkSpec] = []
    targets: list[TargetSpec] = []
    helpers: list[HelperSpec] = []
    hidden_deps: dict[str, tuple[str, ...]] = {}
    duplicates: list[DuplicateSpec] = []

    # name -> (chapter path, kind); excluded names are never valid deps.
    dependable: list[str] = []
    decl_path: dict[str, str] = {}
    thm_names: list[str] = []

    for ci in range(chapters):
        topic = _TOPICS[ci]
        chapter = f"ch{ci + 1:02d}"
        path = f"{chapter}_{topic}.toy"
        decls: list[ChunkDecl] = []
        imports: set[str] = set()
        local: list[str] = []
        for di in range(decls_per_chapter):
            is_thm = di > 0 and rng.random() < thm_ratio
            kind = KIND_THM if is_thm else KIND_DEF
            name = f"{topic}_{'thm' if is_thm else 'def'}_{di}"
            pool = local + dependable
            deps: tuple[str, ...] = ()
            if pool and (is_thm or rng.random() < 0.5):
                k = min(len(pool), rng.randint(1, 3))
                deps = tuple(sorted(rng.sample(pool, k)))
            for dep in deps:
                dep_path = decl_path.get(dep, path)
                if dep_path != path:
                    imports.add(dep_path)
            decls.append(ChunkDecl(name=name, kind=kind, deps=deps))
            decl_path[name] = path
            local.append(name)
            if is_thm:
                thm_names.append(name)
        chunks.append(
            ChunkSpec(
                chapter=chapter,
                topic=topic,
                path=path,
                imports=tuple(sorted(imports)),
                decls=tuple(decls),
            )
        )
        dependable.extend(local)

    # Exclusions: flip some thms to cited/exercise, then make sure nothing
    # depends on them (drop them from any deps list).
    excluded_names = set(rng.sample(thm_names, min(excluded, len(thm_names))))
    marker_cycle = [MARKER_CITED, MARKER_EXERCISE]
    marker_of: dict[str, str] = {
        name: marker_cycle[i % 2] for i, name in enumerate(sorted(excluded_names))
    }
    rebuilt: list[ChunkSpec] = []
    for chunk in chunks:
        decls = []
        for decl in chunk.decls:
            deps = tuple(d for d in decl.deps if d not in excluded_names)
            markers = decl.markers
            if decl.name in excluded_names:
                markers = frozenset({marker_of[decl.name]})
            decls.append(
                ChunkDecl(
                    name=decl.name, kind=decl.kind, deps=deps, markers=markers, target=decl.target
                )
            )
        rebuilt.append(
            ChunkSpec(
                chapter=chunk.chapter,
                topic=chunk.topic,
                path=chunk.path,
                imports=chunk.imports,
                decls=tuple(decls),
            )
        )
    chunks = rebuilt

    # Hidden helpers: some thms secretly need a def that no chunk contains.
    candidates = [n for n in thm_names if n not in excluded_names]
    for name in rng.sample(candidates, min(hidden_helpers, len(candidates))):
        topic = name.split("_")[0]
        helper = HelperSpec(name=f"{topic}_aux_{len(helpers)}", path=decl_path[name])
        helpers.append(helper)
        hidden_deps[name] = (helper.name,)

    # Near duplicates: append an `_alt` def to a later chapter mirroring an
    # earlier def, and have one later decl in the same chapter reference it.
    def_names = [n for n in dependable if "_def_" in n]
    for _ in range(duplicate_pairs):
        if len(chunks) < 2 or not def_names:
            break
        original = rng.choice(def_names)
        origin_index = next(
            i for i, c in enumerate(chunks) if any(d.name == original for d in c.decls)
        )
        later = [i for i in range(len(chunks)) if i > origin_index]
        if not later:
            continue
        ci = rng.choice(later)
        chunk = chunks[ci]
        alt = ChunkDecl(name=f"{original}_alt", kind=KIND_DEF, deps=(), target=False)
        decls = list(chunk.decls) + [alt]
        # One non-target consumer keeps the duplicate load-bearing.
        consumer = ChunkDecl(
            name=f"{alt.name}_use", kind=KIND_THM, deps=(alt.name,), target=False
        )
        decls.append(consumer)
        chunks[ci] = ChunkSpec(
            chapter=chunk.chapter,
            topic=chunk.topic,
            path=chunk.path,
            imports=chunk.imports,
            decls=tuple(decls),
        )
        duplicates.append(
            DuplicateSpec(alt=alt.name, original=original, original_path=decl_path[original])
        )
        def_names.remove(original)

    for chunk in chunks:
        for decl in chunk.decls:
            if decl.target:
                targets.append(
                    TargetSpec(
                        name=decl.name,
                        chapter=chunk.chapter,
                        kind=decl.kind,
                        markers=decl.markers,
                    )
                )

    return Scenario(
        chunks=tuple(chunks),
        targets=tuple(targets),
        helpers=tuple(helpers),
        hidden_deps=hidden_deps,
        duplicates=tuple(duplicates),
    )


def validate_scenario(scenario: Scenario) -> list[str]:
    """Structural problems in a corpus; empty means valid."""
    problems: list[str] = []
    seen: dict[str, str] = {}
    for chunk in scenario.chunks:
        for decl in chunk.decls:
            if decl.name in seen:
                problems.append(f"duplicate decl {decl.name!r} in {chunk.path} and {seen[decl.name]}")
            seen[decl.name] = chunk.path
    for helper in scenario.helpers:
        if helper.name in seen:
            problems.append(f"helper {helper.name!r} collides with a chunk decl")
    known = set(seen) | {h.name for h in scenario.helpers}
    excluded = {t.name for t in scenario.targets if t.excluded}
    defined: set[str] = set()
    for chunk in scenario.chunks:
        for decl in chunk.decls:
            for dep in decl.deps:
                if dep not in known:
                    problems.append(f"{decl.name!r} depends on unknown {dep!r}")
                elif dep not in defined:
                    problems.append(f"{decl.name!r} depends on later decl {dep!r}")
                if dep in excluded:
                    problems.append(f"{decl.name!r} depends on excluded {dep!r}")
            defined.add(decl.name)
    target_names = [t.name for t in scenario.targets]
    if len(set(target_names)) != len(target_names):
        problems.append("duplicate target names")
    for name in target_names:
        if name not in seen:
            problems.append(f"target {name!r} not declared in any chunk")
    for thm, deps in scenario.hidden_deps.items():
        if thm not in seen:
            problems.append(f"hidden dep on unknown thm {thm!r}")
        for dep in deps:
            if dep not in {h.name for h in scenario.helpers}:
                problems.append(f"hidden dep {dep!r} has no helper spec")
    return problems


def save_scenario(scenario: Scenario, directory: str | Path) -> str:
    """Write targets.txt, chunk files and the manifest; returns the content hash."""
    root = Path(directory)
    (root / "chunks").mkdir(parents=True, exist_ok=True)
    (root / "targets.txt").write_text(render_target_list(scenario.targets), encoding="utf-8")
    payload = scenario.to_payload()
    for chunk in payload["chunks"]:
        path = root / "chunks" / f"{chunk['chapter']}.json"
        path.write_text(json.dumps(chunk, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest = {
        "hash": scenario.content_hash(),
        "helpers": payload["helpers"],
        "hidden_deps": payload["hidden_deps"],
        "duplicates": payload["duplicates"],
        "chapters": [c["chapter"] for c in payload["chunks"]],
    }
    (root / "corpus.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest["hash"]


def load_scenario(directory: str | Path) -> Scenario:
    root = Path(directory)
    manifest = json.loads((root / "corpus.json").read_text(encoding="utf-8"))
    chunks = []
    for chapter in manifest["chapters"]:
        data = json.loads((root / "chunks" / f"{chapter}.json").read_text(encoding="utf-8"))
        chunks.append(ChunkSpec.from_payload(data))
    scenario = Scenario(
        chunks=tuple(chunks),
        targets=parse_target_list((root / "targets.txt").read_text(encoding="utf-8")),
        helpers=tuple(HelperSpec(h["name"], h["path"]) for h in manifest["helpers"]),
        hidden_deps={k: tuple(v) for k, v in manifest["hidden_deps"].items()},
        duplicates=tuple(
            DuplicateSpec(d["alt"], d["original"], d["original_path"])
            for d in manifest["duplicates"]
        ),
    )
    if scenario.content_hash() != manifest["hash"]:
        raise ValueError("corpus manifest hash does not match contents")
    return scenario
