import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _sources import LISTING, LISTING_IMPORTS, EXAMPLE_FILES
from libvec.corpus import (ProjectRecord, SourceFileImports, decode_source, extract_imports,
                           manifest_path, read_corpus, remove_import_clones, scan_corpus,
                           scan_project, write_corpus)
from libvec.errors import ConfigError, DataError


# --- extraction --------------------------------------------------------------

def test_listing_python():
    assert extract_imports(LISTING, "python") == LISTING_IMPORTS


@pytest.mark.parametrize("path", sorted(EXAMPLE_FILES))
def test_example_files(path):
    source, expected = EXAMPLE_FILES[path]
    assert extract_imports(source, "python") == expected


def test_empty_file():
    assert extract_imports("", "python") == set()
    assert extract_imports(b"", "js") == set()


def test_bytes_input_matches_str():
    assert extract_imports(LISTING.encode(), "python") == LISTING_IMPORTS


def test_python_forms():
    src = (
        "import a.b, c as d  # comment\n"
        "from e import (f,\n    g as h)\n"
        "from i import *\n"
        "from . import j\n"
        "from .k import l\n"
        "import m; import n\n"
        "from o \\\n    import p\n"
        "x = 'import nothing'\n"
        "    import q\n"
    )
    assert extract_imports(src, "python") == {
        "a.b", "c", "e.f", "e.g", "i", ".j", ".k.l", "m", "n", "o.p", "q"}


def test_python_malformed_items_dropped():
    assert extract_imports("import 3bad, ok\nfrom import x\n", "python") == {"ok"}


def test_js_forms():
    src = (
        "const express = require('express');\n"
        "import React, { useState } from \"react\";\n"
        "import {\n  a,\n  b\n} from '@scope/pkg/sub';\n"
        "import './side-effect.css';\n"
        "// const x = require('commented');\n"
        "/* import y from 'blocked'; */\n"
        "const local = require('./util');\n"
    )
    assert extract_imports(src, "js") == {
        "express", "react", "@scope/pkg/sub", "./side-effect.css", "./util"}


def test_java_forms():
    src = ("package x.y;\nimport java.util.List;\nimport static org.junit.Assert.assertEquals;\n"
           "import com.google.common.collect.*;\n// not an import\n")
    assert extract_imports(src, "java") == {
        "java.util.List", "org.junit.Assert.assertEquals", "com.google.common.collect"}


def test_csharp_forms():
    src = ("using System;\nusing static System.Math;\nusing Json = Newtonsoft.Json;\n"
           "global using System.Linq;\nusing (var f = Open()) {}\n")
    assert extract_imports(src, "csharp") == {"System", "System.Math", "Newtonsoft.Json", "System.Linq"}


def test_ruby_forms():
    src = "require 'json'\nrequire('net/http')\nrequire_relative 'helpers/util'\n"
    assert extract_imports(src, "ruby") == {"json", "net/http", "./helpers/util"}


def test_php_forms():
    src = ("<?php\nuse Symfony\\Component\\HttpFoundation\\Request;\n"
           "use Foo\\Bar as Baz, Qux\\Quux;\n"
           "use Acme\\{ClassA, ClassB as B};\n"
           "use function Util\\helper;\n")
    assert extract_imports(src, "php") == {
        "Symfony\\Component\\HttpFoundation\\Request", "Foo\\Bar", "Qux\\Quux",
        "Acme\\ClassA", "Acme\\ClassB", "Util\\helper"}


def test_unknown_ecosystem():
    with pytest.raises(ConfigError):
        extract_imports("import x", "cobol")


def test_decode_source_rejects_binary():
    assert decode_source(b"import os\n") == "import os\n"
    assert decode_source(bytes(range(128, 256)) * 4) is None


@settings(max_examples=60, deadline=None)
@given(st.lists(st.from_regex(r"[a-z][a-z0-9_]{0,6}(\.[a-z][a-z0-9_]{0,6}){0,2}", fullmatch=True),
                min_size=0, max_size=8))
def test_python_import_lines_roundtrip(modules):
    src = "".join(f"import {m}\n" for m in modules)
    assert extract_imports(src, "python") == set(modules)


# --- scanning ----------------------------------------------------------------

def _write(root, rel, text):
    p = root / rel
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def test_scan_project_python(tmp_path):
    proj = tmp_path / "proj"
    for rel, (src, _) in EXAMPLE_FILES.items():
        _write(proj, rel, src)
    _write(proj, "README.md", "import nothing")
    _write(proj, "empty.py", "x = 1\n")
    rec = scan_project(proj, "python", star_count=7)
    assert rec.project_id == "proj" and rec.star_count == 7
    assert [f.file_path for f in rec.files] == sorted(EXAMPLE_FILES)
    for f in rec.files:
        assert set(f.raw_imports) == EXAMPLE_FILES[f.file_path][1]


def test_scan_project_skips_node_modules(tmp_path):
    proj = tmp_path / "web"
    _write(proj, "src/app.js", "const a = require('express');\n")
    _write(proj, "node_modules/express/index.js", "const b = require('debug');\n")
    rec = scan_project(proj, "js")
    assert [(f.file_path, set(f.raw_imports)) for f in rec.files] == [("src/app.js", {"express"})]


def test_scan_project_jobs_same_result(tmp_path):
    proj = tmp_path / "p"
    for i in range(12):
        _write(proj, f"pkg{i % 3}/m{i}.py", f"import lib{i}\nimport shared\n")
    assert scan_project(proj, "python", jobs=1) == scan_project(proj, "python", jobs=4)


def test_scan_project_errors(tmp_path):
    with pytest.raises(DataError):
        scan_project(tmp_path / "missing", "python")
    proj = tmp_path / "bin"
    proj.mkdir()
    (proj / "blob.py").write_bytes(bytes(range(128, 256)) * 8)
    with pytest.raises(DataError):
        scan_project(proj, "python")


def test_scan_project_counts_skipped(tmp_path):
    proj = tmp_path / "mixed"
    _write(proj, "ok.py", "import os\n")
    (proj / "blob.py").write_bytes(bytes(range(128, 256)) * 8)
    rec = scan_project(proj, "python")
    assert rec.skipped_files == 1 and len(rec.files) == 1


def test_scan_corpus(tmp_path):
    _write(tmp_path, "b/x.py", "import os\n")
    _write(tmp_path, "a/y.py", "import sys\n")
    assert [p.project_id for p in scan_corpus(tmp_path, "python")] == ["a", "b"]


# --- clones ------------------------------------------------------------------

def _project(pid, *files):
    return ProjectRecord(pid, "python",
                         [SourceFileImports(pid, f"f{i}.py", frozenset(imps)) for i, imps in enumerate(files)])


def test_remove_import_clones_union():
    projects = [
        _project("p3", {"a", "b"}, {"c"}),
        _project("p1", {"a"}, {"b", "c"}),  # same union as p3
        _project("p2", {"a", "b"}),
        _project("p0", {"c", "b", "a"}),  # same union again
    ]
    kept, removed = remove_import_clones(projects)
    assert [p.project_id for p in kept] == ["p2", "p0"]
    assert removed == {"p1", "p3"}


def test_remove_import_clones_rejects_duplicate_ids():
    with pytest.raises(DataError):
        remove_import_clones([_project("x", {"a"}), _project("x", {"b"})])


# --- corpus file -------------------------------------------------------------

def test_corpus_roundtrip(tmp_path):
    projects = [ProjectRecord("p1", "js", [SourceFileImports("p1", "a.js", frozenset({"react", "x"}))], 12),
                ProjectRecord("p2", "js", [SourceFileImports("p2", "b.js", frozenset({"lodash"}))])]
    path = write_corpus(tmp_path / "corpus.jsonl", projects)
    assert read_corpus(path) == projects
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert lines[0] == {"project": "p1", "file": "a.js", "imports": ["react", "x"]}
    manifest = json.loads(manifest_path(path).read_text())
    assert manifest["p1"] == {"ecosystem": "js", "star_count": 12, "n_files": 1}


def test_read_corpus_without_manifest(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"project": "p", "file": "f.py", "imports": ["os"]}\n')
    with pytest.raises(DataError):
        read_corpus(path)
    assert read_corpus(path, "python")[0].ecosystem == "python"


def test_read_corpus_malformed(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"project": "p"}\n')
    with pytest.raises(DataError):
        read_corpus(path, "python")
