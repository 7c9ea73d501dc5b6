"""Structural index of a Python repository.

Parses every source file under a root into entities (classes, functions,
methods), module-scope imports, and call sites. The finished index is
immutable and safe to share across threads; all queries in
:mod:`tddgen.retrieval` are read-only over it.
"""

from __future__ import annotations

import ast
import fnmatch
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from tddgen.errors import (
    AmbiguousTargetError,
    ConfigurationError,
    TargetNotFoundError,
)

MODULE_SENTINEL = "<module>"

DEFAULT_INCLUDE_GLOBS = ("**/*.py",)

# Directories never worth indexing.
EXCLUDED_DIR_NAMES = {
    ".git",
    ".hg",
    ".tox",
    ".venv",
    "venv",
    "build",
    "dist",
    "__pycache__",
    ".mypy_cache",
    ".pytest_cache",
    "node_modules",
    ".eggs",
}


@dataclass(frozen=True)
class CodeSpan:
    file_path: str  # repo-relative, forward slashes
    start_line: int  # 1-based
    end_line: int  # 1-based, inclusive
    start_col: int  # 0-based

    def __post_init__(self):
        if self.start_line < 1:
            raise ValueError(f"start_line must be >= 1, got {self.start_line}")
        if self.end_line < self.start_line:
            raise ValueError(
                f"end_line {self.end_line} < start_line {self.start_line}"
            )

    def contains_line(self, line: int) -> bool:
        return self.start_line <= line <= self.end_line


@dataclass(frozen=True)
class CodeEntity:
    kind: str  # "class" | "function" | "method"
    qualified_name: str  # in-file dotted path, e.g. "A.f"
    signature: str  # text of the definition header
    docstring: str | None
    body_text: str  # exact file slice at span
    span: CodeSpan
    enclosing_class: str | None = None

    @property
    def bare_name(self) -> str:
        return self.qualified_name.rsplit(".", 1)[-1]


@dataclass(frozen=True)
class ImportRecord:
    file_path: str
    statement_text: str
    imported_names: tuple[str, ...]
    line: int = 1


@dataclass(frozen=True)
class CallSite:
    callee_name: str  # identifier or dotted attribute tail
    caller_entity: str  # qualified name or MODULE_SENTINEL
    span: CodeSpan

    @property
    def callee_tail(self) -> str:
        return self.callee_name.rsplit(".", 1)[-1]


@dataclass(frozen=True)
class SkipRecord:
    file_path: str
    reason: str


@dataclass(frozen=True)
class RepoIndex:
    root: str
    entities: tuple[CodeEntity, ...]
    imports: tuple[ImportRecord, ...]
    call_sites: tuple[CallSite, ...]
    file_digests: dict[str, str] = field(default_factory=dict)
    skipped: tuple[SkipRecord, ...] = ()

    def entities_in_file(self, file_path: str) -> list[CodeEntity]:
        return [e for e in self.entities if e.span.file_path == file_path]

    def has_file(self, file_path: str) -> bool:
        return file_path in self.file_digests

    def find_entity(self, file_path: str, qualified_name: str) -> CodeEntity | None:
        for e in self.entities:
            if e.span.file_path == file_path and e.qualified_name == qualified_name:
                return e
        return None

    def file_text(self, file_path: str) -> str:
        return (Path(self.root) / file_path).read_text(encoding="utf-8")


def _digest(text: bytes) -> str:
    return hashlib.sha256(text).hexdigest()


def _dotted_name(node: ast.expr) -> str | None:
    """Dotted tail of a Name/Attribute chain, or None for dynamic callees."""
    parts: list[str] = []
    cur = node
    while isinstance(cur, ast.Attribute):
        parts.append(cur.attr)
        cur = cur.value
    if isinstance(cur, ast.Name):
        parts.append(cur.id)
        return ".".join(reversed(parts))
    if parts:
        # Attribute chain hanging off a call/subscript: keep the tail only.
        return ".".join(reversed(parts))
    return None


def _def_span(node: ast.AST, lines: list[str], file_path: str) -> CodeSpan:
    """Span of a def/class including decorators."""
    start = node.lineno
    decorators = getattr(node, "decorator_list", [])
    if decorators:
        start = min(d.lineno for d in decorators)
    return CodeSpan(
        file_path=file_path,
        start_line=start,
        end_line=node.end_lineno,
        start_col=node.col_offset,
    )


def _signature_text(node: ast.AST, lines: list[str]) -> str:
    """Header text from the def/class keyword through the colon line."""
    first = node.lineno - 1
    body_first = node.body[0].lineno - 1 if node.body else first + 1
    header_lines = lines[first:body_first] or [lines[first]]
    # Trim trailing blank/comment-only lines between header and body.
    text = "\n".join(header_lines)
    colon = text.rfind(":")
    if colon != -1:
        text = text[: colon + 1]
    return text


class _FileVisitor(ast.NodeVisitor):
    def __init__(self, file_path: str, source: str):
        self.file_path = file_path
        self.source = source
        self.lines = source.splitlines()
        self.entities: list[CodeEntity] = []
        self.call_sites: list[CallSite] = []
        self._stack: list[tuple[str, str]] = []  # (kind, name)

    def _qualname(self, name: str) -> str:
        return ".".join([n for _, n in self._stack] + [name])

    def _enclosing_class(self) -> str | None:
        if self._stack and self._stack[-1][0] == "class":
            return ".".join(n for _, n in self._stack)
        return None

    def _slice(self, span: CodeSpan) -> str:
        return "\n".join(self.lines[span.start_line - 1 : span.end_line])

    def _add_def(self, node, kind_if_plain: str):
        span = _def_span(node, self.lines, self.file_path)
        enclosing = self._enclosing_class()
        kind = "method" if enclosing else kind_if_plain
        qname = self._qualname(node.name)
        self.entities.append(
            CodeEntity(
                kind=kind,
                qualified_name=qname,
                signature=_signature_text(node, self.lines),
                docstring=ast.get_docstring(node),
                body_text=self._slice(span),
                span=span,
                enclosing_class=enclosing,
            )
        )
        self._collect_calls(node, qname)
        self._stack.append(("function", node.name))
        for child in node.body:
            self.visit(child)
        self._stack.pop()

    def visit_FunctionDef(self, node):
        self._add_def(node, "function")

    def visit_AsyncFunctionDef(self, node):
        self._add_def(node, "function")

    def visit_ClassDef(self, node):
        span = _def_span(node, self.lines, self.file_path)
        qname = self._qualname(node.name)
        self.entities.append(
            CodeEntity(
                kind="class",
                qualified_name=qname,
                signature=_signature_text(node, self.lines),
                docstring=ast.get_docstring(node),
                body_text=self._slice(span),
                span=span,
                enclosing_class=self._enclosing_class(),
            )
        )
        self._collect_calls(node, qname)
        self._stack.append(("class", node.name))
        for child in node.body:
            self.visit(child)
        self._stack.pop()

    def _collect_calls(self, scope_node, caller_qname: str):
        """Call sites directly inside this scope; nested defs own their calls."""

        def rec(node):
            for child in ast.iter_child_nodes(node):
                if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                    continue
                if isinstance(child, ast.Call):
                    name = _dotted_name(child.func)
                    if name is not None:
                        self.call_sites.append(
                            CallSite(
                                callee_name=name,
                                caller_entity=caller_qname,
                                span=CodeSpan(
                                    self.file_path,
                                    child.lineno,
                                    child.end_lineno,
                                    child.col_offset,
                                ),
                            )
                        )
                rec(child)

        rec(scope_node)

    def collect_module_calls(self, tree: ast.Module):
        self._collect_calls(tree, MODULE_SENTINEL)


def _collect_imports(tree: ast.Module, file_path: str, lines: list[str]) -> list[ImportRecord]:
    """Module-scope imports, including those guarded by top-level if/try."""
    records: list[ImportRecord] = []

    def walk_block(stmts):
        for stmt in stmts:
            if isinstance(stmt, (ast.Import, ast.ImportFrom)):
                text = "\n".join(lines[stmt.lineno - 1 : stmt.end_lineno])
                names = []
                for alias in stmt.names:
                    if alias.asname:
                        names.append(alias.asname)
                    elif alias.name == "*":
                        names.append("*")
                    else:
                        names.append(alias.name.split(".")[0])
                records.append(
                    ImportRecord(
                        file_path=file_path,
                        statement_text=text,
                        imported_names=tuple(names),
                        line=stmt.lineno,
                    )
                )
            elif isinstance(stmt, ast.If):
                walk_block(stmt.body)
                walk_block(stmt.orelse)
            elif isinstance(stmt, ast.Try):
                walk_block(stmt.body)
                for handler in stmt.handlers:
                    walk_block(handler.body)
                walk_block(stmt.orelse)
                walk_block(stmt.finalbody)

    walk_block(tree.body)
    records.sort(key=lambda r: r.line)
    return records


def _parse_file(root: Path, rel_path: str):
    """Returns (entities, imports, call_sites, digest) or a SkipRecord."""
    full = root / rel_path
    try:
        raw = full.read_bytes()
        source = raw.decode("utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        return SkipRecord(rel_path, f"unreadable: {exc}")
    try:
        tree = ast.parse(source)
    except SyntaxError as exc:
        return SkipRecord(rel_path, f"syntax error: {exc.msg} (line {exc.lineno})")
    visitor = _FileVisitor(rel_path, source)
    for child in tree.body:
        visitor.visit(child)
    visitor.collect_module_calls(tree)
    imports = _collect_imports(tree, rel_path, visitor.lines)
    return visitor.entities, imports, visitor.call_sites, _digest(raw)


def _iter_source_files(root: Path, include_globs) -> list[str]:
    rel_paths = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(
            d for d in dirnames if d not in EXCLUDED_DIR_NAMES and not d.endswith(".egg-info")
        )
        for fname in sorted(filenames):
            rel = os.path.relpath(os.path.join(dirpath, fname), root).replace(os.sep, "/")
            # "**/" prefixes must also match files at the root itself
            if any(
                fnmatch.fnmatch(rel, g)
                or (g.startswith("**/") and fnmatch.fnmatch(rel, g[3:]))
                for g in include_globs
            ):
                rel_paths.append(rel)
    return rel_paths


def build_index(
    root: str | Path,
    include_globs: tuple[str, ...] = DEFAULT_INCLUDE_GLOBS,
    max_workers: int = 8,
) -> RepoIndex:
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"index root is not a readable directory: {root}")
    rel_paths = _iter_source_files(root, include_globs)

    entities: list[CodeEntity] = []
    imports: list[ImportRecord] = []
    call_sites: list[CallSite] = []
    digests: dict[str, str] = {}
    skipped: list[SkipRecord] = []

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        for rel, result in zip(rel_paths, pool.map(lambda p: _parse_file(root, p), rel_paths)):
            if isinstance(result, SkipRecord):
                skipped.append(result)
                continue
            ents, imps, calls, dig = result
            entities.extend(ents)
            imports.extend(imps)
            call_sites.extend(calls)
            digests[rel] = dig

    entities.sort(key=lambda e: (e.span.file_path, e.span.start_line, e.qualified_name))
    imports.sort(key=lambda i: (i.file_path, i.line))
    call_sites.sort(key=lambda c: (c.span.file_path, c.span.start_line, c.span.start_col))
    return RepoIndex(
        root=str(root),
        entities=tuple(entities),
        imports=tuple(imports),
        call_sites=tuple(call_sites),
        file_digests=digests,
        skipped=tuple(skipped),
    )


def resolve_target(index: RepoIndex, locator: dict) -> CodeEntity:
    """Resolve a {file_path, qualified_name | line} locator to one entity.

    Line locators prefer the innermost (latest-starting) def/method whose
    span contains the line; an exact tie is an ambiguity error.
    """
    file_path = locator.get("file_path")
    if not file_path or not index.has_file(file_path):
        raise TargetNotFoundError(f"file not indexed: {file_path!r}")
    in_file = index.entities_in_file(file_path)
    qname = locator.get("qualified_name")
    if qname:
        matches = [e for e in in_file if e.qualified_name == qname]
    else:
        line = locator.get("line")
        if line is None:
            raise ConfigurationError("locator needs qualified_name or line")
        containing = [
            e for e in in_file if e.kind != "class" and e.span.contains_line(line)
        ]
        if not containing:
            raise TargetNotFoundError(f"no entity at {file_path}:{line}")
        innermost = max(e.span.start_line for e in containing)
        matches = [e for e in containing if e.span.start_line == innermost]
    if not matches:
        raise TargetNotFoundError(f"no entity matched locator {locator!r}")
    if len(matches) > 1:
        raise AmbiguousTargetError(
            f"locator {locator!r} matched {len(matches)} entities",
            [e.qualified_name for e in matches],
        )
    return matches[0]


# ---------------------------------------------------------------------------
# On-disk cache: one JSON document keyed by root + file digests.
# ---------------------------------------------------------------------------

def index_to_json(index: RepoIndex) -> str:
    def span(s: CodeSpan):
        return [s.file_path, s.start_line, s.end_line, s.start_col]

    doc = {
        "schema_version": 1,
        "root": index.root,
        "file_digests": dict(sorted(index.file_digests.items())),
        "entities": [
            {
                "kind": e.kind,
                "qualified_name": e.qualified_name,
                "signature": e.signature,
                "docstring": e.docstring,
                "body_text": e.body_text,
                "span": span(e.span),
                "enclosing_class": e.enclosing_class,
            }
            for e in index.entities
        ],
        "imports": [
            {
                "file_path": i.file_path,
                "statement_text": i.statement_text,
                "imported_names": list(i.imported_names),
                "line": i.line,
            }
            for i in index.imports
        ],
        "call_sites": [
            {
                "callee_name": c.callee_name,
                "caller_entity": c.caller_entity,
                "span": span(c.span),
            }
            for c in index.call_sites
        ],
        "skipped": [{"file_path": s.file_path, "reason": s.reason} for s in index.skipped],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def index_from_json(text: str) -> RepoIndex:
    doc = json.loads(text)

    def span(parts) -> CodeSpan:
        return CodeSpan(parts[0], parts[1], parts[2], parts[3])

    return RepoIndex(
        root=doc["root"],
        entities=tuple(
            CodeEntity(
                kind=e["kind"],
                qualified_name=e["qualified_name"],
                signature=e["signature"],
                docstring=e["docstring"],
                body_text=e["body_text"],
                span=span(e["span"]),
                enclosing_class=e["enclosing_class"],
            )
            for e in doc["entities"]
        ),
        imports=tuple(
            ImportRecord(
                file_path=i["file_path"],
                statement_text=i["statement_text"],
                imported_names=tuple(i["imported_names"]),
                line=i["line"],
            )
            for i in doc["imports"]
        ),
        call_sites=tuple(
            CallSite(callee_name=c["callee_name"], caller_entity=c["caller_entity"], span=span(c["span"]))
            for c in doc["call_sites"]
        ),
        file_digests=doc["file_digests"],
        skipped=tuple(SkipRecord(s["file_path"], s["reason"]) for s in doc["skipped"]),
    )


def load_or_build(root: str | Path, cache_path: str | Path | None = None, **kwargs) -> RepoIndex:
    """Build the index, reusing a cache file when digests still match."""
    if cache_path is None:
        return build_index(root, **kwargs)
    cache_path = Path(cache_path)
    fresh = build_index(root, **kwargs)
    if cache_path.exists():
        try:
            cached = index_from_json(cache_path.read_text(encoding="utf-8"))
            if cached.root == fresh.root and cached.file_digests == fresh.file_digests:
                return cached
        except (json.JSONDecodeError, KeyError):
            pass
    cache_path.parent.mkdir(parents=True, exist_ok=True)
    cache_path.write_text(index_to_json(fresh), encoding="utf-8")
    return fresh
