"""Agent-facing search APIs over a repository index.

All operations are read-only and deterministic: identical (index, query)
pairs return identical ordered results. Non-similarity searches order hits
by (file_path, start_line); similarity search orders by score descending
with qualified-name tie-break.
"""

from __future__ import annotations

from dataclasses import dataclass

from tddgen.bm25 import Bm25Index, Bm25Params, tokenize
from tddgen.errors import LineRangeError, ScopeNotFoundError
from tddgen.repo_index import CodeEntity, CodeSpan, ImportRecord, RepoIndex

MAX_CODE_SEARCH_HITS = 20


@dataclass(frozen=True)
class RetrievalConfig:
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    max_snippet_lines: int = 80


@dataclass(frozen=True)
class SearchHit:
    snippet: str
    span: CodeSpan
    provenance: str
    entity: CodeEntity | None = None
    score: float | None = None


def _sorted_hits(hits: list[SearchHit]) -> list[SearchHit]:
    hits.sort(key=lambda h: (h.span.file_path, h.span.start_line))
    return hits


def _match_file(index: RepoIndex, file_name: str) -> str | None:
    """Resolve a path or bare filename against indexed files."""
    if index.has_file(file_name):
        return file_name
    suffix = "/" + file_name.lstrip("/")
    matches = sorted(p for p in index.file_digests if p.endswith(suffix))
    return matches[0] if matches else None


def _class_summary(index: RepoIndex, cls: CodeEntity) -> str:
    """Class signature summary: header plus member signatures, no bodies."""
    parts = [cls.signature]
    prefix = cls.qualified_name + "."
    members = [
        e
        for e in index.entities_in_file(cls.span.file_path)
        if e.qualified_name.startswith(prefix)
        and "." not in e.qualified_name[len(prefix) :]
    ]
    members.sort(key=lambda e: e.span.start_line)
    for member in members:
        parts.append("    " + " ".join(member.signature.split()))
    return "\n".join(parts)


def search_class(index: RepoIndex, class_name: str) -> list[SearchHit]:
    if not class_name:
        raise ValueError("class_name must be nonempty")
    hits = [
        SearchHit(
            snippet=_class_summary(index, e),
            span=e.span,
            provenance="search_class",
            entity=e,
        )
        for e in index.entities
        if e.kind == "class" and e.bare_name == class_name
    ]
    return _sorted_hits(hits)


def search_class_in_file(index: RepoIndex, class_name: str, file_name: str) -> list[SearchHit]:
    resolved = _match_file(index, file_name)
    if resolved is None:
        raise ScopeNotFoundError(f"file not indexed: {file_name!r}")
    return [h for h in search_class(index, class_name) if h.span.file_path == resolved]


def _method_hits(index: RepoIndex, method_name: str, provenance: str) -> list[SearchHit]:
    if not method_name:
        raise ValueError("method_name must be nonempty")
    hits = [
        SearchHit(snippet=e.body_text, span=e.span, provenance=provenance, entity=e)
        for e in index.entities
        if e.kind in ("function", "method") and e.bare_name == method_name
    ]
    return _sorted_hits(hits)


def search_method(index: RepoIndex, method_name: str) -> list[SearchHit]:
    return _method_hits(index, method_name, "search_method")


def search_method_in_file(index: RepoIndex, method_name: str, file_path: str) -> list[SearchHit]:
    resolved = _match_file(index, file_path)
    if resolved is None:
        raise ScopeNotFoundError(f"file not indexed: {file_path!r}")
    return [
        h
        for h in _method_hits(index, method_name, "search_method_in_file")
        if h.span.file_path == resolved
    ]


def search_method_in_class(index: RepoIndex, method_name: str, class_name: str) -> list[SearchHit]:
    classes = [e for e in index.entities if e.kind == "class" and e.bare_name == class_name]
    if not classes:
        raise ScopeNotFoundError(f"class not indexed: {class_name!r}")
    class_names = {c.qualified_name for c in classes}
    return [
        h
        for h in _method_hits(index, method_name, "search_method_in_class")
        if h.entity is not None and h.entity.enclosing_class in class_names
    ]


def _enclosing_entity(index: RepoIndex, file_path: str, line: int) -> CodeEntity | None:
    containing = [
        e for e in index.entities_in_file(file_path) if e.span.contains_line(line)
    ]
    if not containing:
        return None
    return max(containing, key=lambda e: e.span.start_line)


def _window_span(file_path: str, center: int, half: int, n_lines: int) -> CodeSpan:
    start = max(1, center - half)
    end = min(n_lines, center + half)
    return CodeSpan(file_path, start, end, 0)


def search_code(index: RepoIndex, code_str: str, provenance: str = "search_code") -> list[SearchHit]:
    if not code_str:
        raise ValueError("code_str must be nonempty")
    cfg = RetrievalConfig()
    hits: list[SearchHit] = []
    for file_path in sorted(index.file_digests):
        text = index.file_text(file_path)
        lines = text.splitlines()
        pos = text.find(code_str)
        while pos != -1:
            line_no = text.count("\n", 0, pos) + 1
            entity = _enclosing_entity(index, file_path, line_no)
            if entity is not None:
                hits.append(
                    SearchHit(
                        snippet=entity.body_text,
                        span=entity.span,
                        provenance=provenance,
                        entity=entity,
                    )
                )
            else:
                span = _window_span(file_path, line_no, cfg.max_snippet_lines // 2, len(lines))
                hits.append(
                    SearchHit(
                        snippet="\n".join(lines[span.start_line - 1 : span.end_line]),
                        span=span,
                        provenance=provenance,
                    )
                )
            pos = text.find(code_str, pos + len(code_str))
    # collapse duplicate hits inside the same enclosing entity
    seen: set[tuple[str, int, int]] = set()
    unique = []
    for hit in hits:
        key = (hit.span.file_path, hit.span.start_line, hit.span.end_line)
        if key not in seen:
            seen.add(key)
            unique.append(hit)
    return _sorted_hits(unique)[:MAX_CODE_SEARCH_HITS]


def search_code_in_file(index: RepoIndex, code_str: str, file_path: str) -> list[SearchHit]:
    resolved = _match_file(index, file_path)
    if resolved is None:
        raise ScopeNotFoundError(f"file not indexed: {file_path!r}")
    return [
        h
        for h in search_code(index, code_str, provenance="search_code_in_file")
        if h.span.file_path == resolved
    ]


def get_code_around_line(
    index: RepoIndex, file_path: str, line_number: int, window_size: int
) -> SearchHit:
    resolved = _match_file(index, file_path)
    if resolved is None:
        raise ScopeNotFoundError(f"file not indexed: {file_path!r}")
    if window_size < 0:
        raise ValueError("window_size must be >= 0")
    lines = index.file_text(resolved).splitlines()
    if not 1 <= line_number <= len(lines):
        raise LineRangeError(
            f"line {line_number} out of range for {resolved} ({len(lines)} lines)"
        )
    span = _window_span(resolved, line_number, window_size, len(lines))
    return SearchHit(
        snippet="\n".join(lines[span.start_line - 1 : span.end_line]),
        span=span,
        provenance="get_code_around_line",
    )


def search_import_statement(index: RepoIndex, file_name: str) -> list[ImportRecord]:
    resolved = _match_file(index, file_name)
    if resolved is None:
        raise ScopeNotFoundError(f"file not indexed: {file_name!r}")
    return [i for i in index.imports if i.file_path == resolved]


def _similarity_doc(entity: CodeEntity) -> str:
    return entity.body_text


def similarity_query(target: CodeEntity) -> str:
    """Query document: target signature plus docstring (the body is a stub)."""
    return target.signature + "\n" + (target.docstring or "")


def search_similar_method(
    index: RepoIndex,
    target: CodeEntity,
    n: int,
    cfg: RetrievalConfig = RetrievalConfig(),
) -> list[SearchHit]:
    if n < 1:
        raise ValueError("n must be >= 1")
    corpus = [
        e
        for e in index.entities
        if e.kind in ("function", "method")
        and not (e.span == target.span and e.qualified_name == target.qualified_name)
    ]
    if not corpus:
        return []
    by_key = {f"{e.span.file_path}::{e.qualified_name}::{e.span.start_line}": e for e in corpus}
    bm25 = Bm25Index(
        sorted((key, _similarity_doc(e)) for key, e in by_key.items()),
        Bm25Params(k1=cfg.bm25_k1, b=cfg.bm25_b),
    )
    ranked = sorted(
        bm25.rank(similarity_query(target)),
        key=lambda pair: (-pair[1], by_key[pair[0]].qualified_name, pair[0]),
    )
    hits = []
    for key, score in ranked[:n]:
        e = by_key[key]
        hits.append(
            SearchHit(
                snippet=e.body_text,
                span=e.span,
                provenance="search_similar_method",
                entity=e,
                score=score,
            )
        )
    return hits


def search_target_usage(index: RepoIndex, target: CodeEntity, n: int) -> list[SearchHit]:
    if n < 1:
        raise ValueError("n must be >= 1")
    bare = target.bare_name
    caller_keys: set[tuple[str, str]] = set()
    for site in index.call_sites:
        if site.callee_tail != bare:
            continue
        caller_keys.add((site.span.file_path, site.caller_entity))
    hits = []
    for file_path, caller in sorted(caller_keys):
        entity = index.find_entity(file_path, caller)
        if entity is None:  # module-scope sentinel has no entity
            continue
        if entity.span == target.span and entity.qualified_name == target.qualified_name:
            continue
        hits.append(
            SearchHit(
                snippet=entity.body_text,
                span=entity.span,
                provenance="search_target_usage",
                entity=entity,
            )
        )
    return _sorted_hits(hits)[:n]
