"""Import extraction from source trees and the line-delimited corpus format.

A corpus is a sequence of ``(project, file, imports)`` triples. On disk it is
a JSONL file with one record per importing source file plus a sidecar
``<stem>.manifest.json`` carrying per-project metadata.
"""

from __future__ import annotations

import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from ._io import atomic_write
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

ECOSYSTEMS = ("java", "js", "python", "ruby", "php", "csharp")

SOURCE_SUFFIXES = {
    "java": (".java",),
    "js": (".js", ".jsx", ".mjs", ".cjs", ".ts", ".tsx"),
    "python": (".py",),
    "ruby": (".rb",),
    "php": (".php",),
    "csharp": (".cs",),
}

# A file whose decoded text is more than this fraction U+FFFD is treated as binary.
MAX_REPLACEMENT_FRACTION = 0.10


@dataclass(frozen=True)
class SourceFileImports:
    project_id: str
    file_path: str
    raw_imports: frozenset

    def __post_init__(self):
        if not isinstance(self.raw_imports, frozenset):
            object.__setattr__(self, "raw_imports", frozenset(self.raw_imports))


@dataclass
class ProjectRecord:
    project_id: str
    ecosystem: str
    files: list = field(default_factory=list)
    star_count: Optional[int] = None
    skipped_files: int = 0

    def __post_init__(self):
        check_ecosystem(self.ecosystem)
        if self.star_count is not None and self.star_count < 0:
            raise DataError(f"{self.project_id}: star_count must be >= 0")
        paths = [f.file_path for f in self.files]
        if len(paths) != len(set(paths)):
            raise DataError(f"{self.project_id}: duplicate file paths")

    def import_union(self) -> frozenset:
        out = set()
        for f in self.files:
            out |= f.raw_imports
        return frozenset(out)


def check_ecosystem(ecosystem: str) -> str:
    if ecosystem not in ECOSYSTEMS:
        raise ConfigError(
            f"unknown ecosystem {ecosystem!r}; expected one of {', '.join(ECOSYSTEMS)}"
        )
    return ecosystem


# ---------------------------------------------------------------------------
# Per-language extraction
# ---------------------------------------------------------------------------

_PY_NAME = re.compile(r"[A-Za-z_]\w*(?:\.[A-Za-z_]\w*)*$")
_PY_FROM_MODULE = re.compile(r"\.*(?:[A-Za-z_]\w*(?:\.[A-Za-z_]\w*)*)?$")


def _python_logical_lines(text: str):
    """Yield import-ish logical lines, joining backslash and bracket continuations."""
    buf = []
    depth = 0
    for line in text.splitlines():
        if not buf:
            stripped = line.lstrip()
            if not (stripped.startswith("import ") or stripped.startswith("from ")):
                continue
        code = line.split("#", 1)[0]
        depth += code.count("(") - code.count(")")
        if code.rstrip().endswith("\\"):
            buf.append(code.rstrip()[:-1])
            continue
        buf.append(code)
        if depth > 0:
            continue
        yield " ".join(buf)
        buf = []
        depth = 0
    if buf:
        yield " ".join(buf)


def _python_names(clause: str):
    """Parse ``a, b as c`` into bare names; malformed items are dropped."""
    clause = clause.replace("(", " ").replace(")", " ")
    for item in clause.split(","):
        parts = item.split()
        if not parts:
            continue
        if len(parts) == 3 and parts[1] == "as":
            parts = parts[:1]
        if len(parts) == 1 and (parts[0] == "*" or _PY_NAME.match(parts[0])):
            yield parts[0]


def _extract_python(text: str) -> set:
    found = set()
    for logical in _python_logical_lines(text):
        for stmt in logical.split(";"):
            stmt = stmt.strip()
            if stmt.startswith("import "):
                found.update(n for n in _python_names(stmt[len("import "):]) if n != "*")
            elif stmt.startswith("from "):
                head, sep, names = stmt[len("from "):].partition(" import ")
                module = head.strip()
                if not sep or not module or not _PY_FROM_MODULE.match(module):
                    continue
                for name in _python_names(names):
                    if name == "*":
                        found.add(module)
                    elif module.endswith("."):
                        found.add(module + name)
                    else:
                        found.add(f"{module}.{name}")
    return found


_JAVA_IMPORT = re.compile(
    r"^[ \t]*import\s+(?:static\s+)?"
    r"([A-Za-z_$][\w$]*(?:\s*\.\s*[A-Za-z_$][\w$]*)*)(\s*\.\s*\*)?\s*;",
    re.MULTILINE,
)
_CSHARP_USING = re.compile(
    r"^[ \t]*(?:global\s+)?using\s+(?:static\s+)?(?:[A-Za-z_]\w*\s*=\s*)?"
    r"([A-Za-z_]\w*(?:\s*\.\s*[A-Za-z_]\w*)*)\s*;",
    re.MULTILINE,
)


def _extract_dotted(pattern: re.Pattern, text: str) -> set:
    return {re.sub(r"\s+", "", m.group(1)) for m in pattern.finditer(text)}


_JS_LINE_COMMENT = re.compile(r"(?m)(^|\s)//.*$")
_JS_BLOCK_COMMENT = re.compile(r"/\*.*?\*/", re.DOTALL)
_JS_PATTERNS = (
    re.compile(r"\brequire\s*\(\s*(['\"`])([^'\"`\n]+)\1\s*\)"),
    re.compile(r"\bimport\s+(?:type\s+)?[\w$*{},\s]+?\s+from\s+(['\"])([^'\"\n]+)\1"),
    re.compile(r"\bimport\s+(['\"])([^'\"\n]+)\1"),
)


def _extract_js(text: str) -> set:
    text = _JS_BLOCK_COMMENT.sub(" ", text)
    text = _JS_LINE_COMMENT.sub(r"\1", text)
    found = set()
    for pat in _JS_PATTERNS:
        found.update(m.group(2).strip() for m in pat.finditer(text))
    found.discard("")
    return found


_RUBY_REQUIRE = re.compile(
    r"^[ \t]*require(_relative)?\s*\(?\s*(['\"])([^'\"\n]+)\2", re.MULTILINE
)


def _extract_ruby(text: str) -> set:
    found = set()
    for m in _RUBY_REQUIRE.finditer(text):
        target = m.group(3).strip()
        # require_relative paths are project-internal; mark them as such.
        if m.group(1) and not target.startswith((".", "/")):
            target = "./" + target
        found.add(target)
    return found


_PHP_USE = re.compile(r"^[ \t]*use\s+(?:function\s+|const\s+)?([^;{]+(?:\{[^}]*\})?)\s*;", re.MULTILINE)
_PHP_NAME = re.compile(r"[A-Za-z_][\w]*(?:\\[A-Za-z_]\w*)*$")


def _php_strip_alias(item: str) -> str:
    parts = item.split()
    if len(parts) == 3 and parts[1].lower() == "as":
        return parts[0]
    return item.strip()


def _extract_php(text: str) -> set:
    found = set()
    for m in _PHP_USE.finditer(text):
        body = m.group(1).strip()
        if "{" in body:
            prefix, _, rest = body.partition("{")
            prefix = prefix.strip().strip("\\")
            members = rest.rstrip("}").split(",")
            names = [prefix + "\\" + _php_strip_alias(x).lstrip("\\") for x in members if x.strip()]
        else:
            names = [_php_strip_alias(x).lstrip("\\") for x in body.split(",")]
        for name in names:
            name = name.replace("\\\\", "\\")
            name = re.sub(r"^(function|const)\s+", "", name)
            if _PHP_NAME.match(name):
                found.add(name)
    return found


_EXTRACTORS = {
    "python": _extract_python,
    "java": lambda t: _extract_dotted(_JAVA_IMPORT, t),
    "csharp": lambda t: _extract_dotted(_CSHARP_USING, t),
    "js": _extract_js,
    "ruby": _extract_ruby,
    "php": _extract_php,
}


def decode_source(data: bytes) -> Optional[str]:
    """Decode bytes as UTF-8 with replacement; None for binary-looking content."""
    text = data.decode("utf-8", errors="replace")
    if text and text.count("\ufffd") > MAX_REPLACEMENT_FRACTION * len(text):
        return None
    return text


def extract_imports(file_content, ecosystem: str) -> set:
    """Return the set of statically declared raw imports in one source file.

    ``file_content`` may be ``str`` or ``bytes``; undecodable bytes are replaced.
    Matching is line/pattern based, so imports inside block strings may leak
    through. That is accepted in exchange for robustness on unparsable code.

    >>> sorted(extract_imports("import numpy as np\\nfrom scipy import linalg", "python"))
    ['numpy', 'scipy.linalg']
    """
    check_ecosystem(ecosystem)
    if isinstance(file_content, bytes):
        file_content = file_content.decode("utf-8", errors="replace")
    return _EXTRACTORS[ecosystem](file_content)


# ---------------------------------------------------------------------------
# Project scanning
# ---------------------------------------------------------------------------


def _iter_source_files(root: Path, ecosystem: str):
    suffixes = SOURCE_SUFFIXES[ecosystem]
    for dirpath, dirnames, filenames in os.walk(root):
        if ecosystem == "js":
            dirnames[:] = [d for d in dirnames if d != "node_modules"]
        dirnames.sort()
        for name in sorted(filenames):
            if name.endswith(suffixes):
                yield Path(dirpath) / name


def _read_and_extract(path: Path, ecosystem: str):
    try:
        data = path.read_bytes()
    except OSError as exc:
        logger.warning("skipping unreadable file %s: %s", path, exc)
        return None
    text = decode_source(data)
    if text is None:
        logger.warning("skipping binary-looking file %s", path)
        return None
    return extract_imports(text, ecosystem)


def scan_project(root, ecosystem: str, project_id: Optional[str] = None,
                 star_count: Optional[int] = None, jobs: int = 1) -> ProjectRecord:
    """Extract imports from every source file under ``root``.

    Files without imports are dropped. Output order is path-lexicographic
    regardless of ``jobs``.
    """
    check_ecosystem(ecosystem)
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"project root {root} is not a directory")
    try:
        os.listdir(root)
    except OSError as exc:
        raise DataError(f"project root {root} is unreadable: {exc}") from exc
    project_id = project_id or root.name

    paths = list(_iter_source_files(root, ecosystem))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda p: _read_and_extract(p, ecosystem), paths))
    else:
        results = [_read_and_extract(p, ecosystem) for p in paths]

    files = []
    skipped = 0
    for path, imports in zip(paths, results):
        if imports is None:
            skipped += 1
        elif imports:
            rel = path.relative_to(root).as_posix()
            files.append(SourceFileImports(project_id, rel, frozenset(imports)))
    if paths and skipped == len(paths):
        raise DataError(f"no readable source files under {root}")
    files.sort(key=lambda f: f.file_path)
    if skipped:
        logger.warning("%s: skipped %d unreadable file(s)", project_id, skipped)
    return ProjectRecord(project_id, ecosystem, files, star_count, skipped)


def scan_corpus(root, ecosystem: str, jobs: int = 1) -> list:
    """Scan each immediate subdirectory of ``root`` as one project."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"corpus root {root} is not a directory")
    projects = []
    for child in sorted(root.iterdir(), key=lambda p: p.name):
        if child.is_dir():
            projects.append(scan_project(child, ecosystem, child.name, jobs=jobs))
    return projects


def remove_import_clones(projects: Sequence[ProjectRecord]):
    """Drop projects whose union of raw imports equals another project's.

    The lexicographically smallest project id of each group survives.
    Returns ``(kept, removed_ids)`` with ``kept`` in input order.
    """
    ids = [p.project_id for p in projects]
    if len(ids) != len(set(ids)):
        raise DataError("project ids must be unique")
    groups = {}
    for p in projects:
        groups.setdefault(p.import_union(), []).append(p.project_id)
    winners = {min(members) for members in groups.values()}
    kept = [p for p in projects if p.project_id in winners]
    removed = {pid for pid in ids if pid not in winners}
    return kept, removed


# ---------------------------------------------------------------------------
# Corpus file format
# ---------------------------------------------------------------------------


def manifest_path(corpus_path) -> Path:
    corpus_path = Path(corpus_path)
    return corpus_path.with_name(corpus_path.name.split(".")[0] + ".manifest.json")


def write_corpus(path, projects: Iterable[ProjectRecord]) -> Path:
    """Write the JSONL corpus and its manifest atomically."""
    path = Path(path)
    projects = list(projects)
    manifest = {}
    with atomic_write(path) as f:
        for p in projects:
            for sf in p.files:
                rec = {"project": p.project_id, "file": sf.file_path,
                       "imports": sorted(sf.raw_imports)}
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
            manifest[p.project_id] = {"ecosystem": p.ecosystem,
                                      "star_count": p.star_count,
                                      "n_files": len(p.files)}
    with atomic_write(manifest_path(path)) as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")
    return path


def read_corpus(path, ecosystem: Optional[str] = None) -> list:
    """Load a corpus written by :func:`write_corpus`.

    The manifest supplies ecosystems and star counts when present; otherwise
    ``ecosystem`` must be given.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file {path} does not exist")
    mpath = manifest_path(path)
    manifest = json.loads(mpath.read_text(encoding="utf-8")) if mpath.exists() else {}
    if ecosystem is not None:
        check_ecosystem(ecosystem)

    files_by_project = {}
    with path.open(encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pid, fpath, imports = rec["project"], rec["file"], rec["imports"]
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed corpus record ({exc})") from exc
            files_by_project.setdefault(pid, []).append(
                SourceFileImports(pid, fpath, frozenset(imports)))

    order = list(files_by_project)
    order += sorted(pid for pid in manifest if pid not in files_by_project)
    projects = []
    for pid in order:
        meta = manifest.get(pid, {})
        eco = meta.get("ecosystem") or ecosystem
        if eco is None:
            raise DataError(f"no ecosystem known for project {pid!r}; pass one explicitly")
        projects.append(ProjectRecord(pid, eco, files_by_project.get(pid, []),
                                      meta.get("star_count")))
    return projects
