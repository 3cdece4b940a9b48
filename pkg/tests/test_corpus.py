from __future__ import annotations

import json

import pytest

from helpqa.corpus import (
    Corpus,
    Section,
    compute_stats,
    corpus_to_jsonl,
    jsonl_to_corpus,
    load_corpus,
    make_corpus,
    parse_page,
)
from helpqa.errors import EmptyPage, ManifestMismatch, SchemaError

URL = "https://help.example.com/edit-text"


def wrap(body_html: str) -> str:
    return f"<html><head><title>x</title></head><body>{body_html}</body></html>"


def test_two_h2_page_splits_into_two_sections():
    html = wrap("<h2>Edit text</h2><p>First paragraph.</p><h2>Rotate</h2><p>Second paragraph.</p>")
    sections = parse_page(html, URL)
    assert [s.heading for s in sections] == ["Edit text", "Rotate"]
    assert [s.body for s in sections] == ["First paragraph.", "Second paragraph."]
    assert [s.section_index for s in sections] == [0, 1]


def test_anchor_contents_become_visible_text_only():
    html = wrap('<h2>H</h2><p>Please <a href="https://u.example.com/target">click here</a> now.</p>')
    (section,) = parse_page(html, URL)
    assert "click here" in section.body
    assert "u.example.com" not in section.body
    assert "href" not in section.body


def test_images_dropped_entirely_including_alt_text():
    html = wrap('<h2>H</h2><p>Before <img src="pic.png" alt="ALTTEXT"> after.</p>')
    (section,) = parse_page(html, URL)
    assert section.body == "Before after."
    assert "ALTTEXT" not in section.body
    assert "pic.png" not in section.body


def test_pre_h2_content_becomes_section_zero_with_empty_heading():
    html = wrap("<p>Intro words.</p><h2>Topic</h2><p>Body.</p>")
    sections = parse_page(html, URL)
    assert sections[0].heading == ""
    assert sections[0].body == "Intro words."
    assert sections[1].heading == "Topic"


def test_empty_pre_h2_region_is_dropped():
    html = wrap("<h2>Topic</h2><p>Body.</p>")
    (section,) = parse_page(html, URL)
    assert section.section_index == 0
    assert section.heading == "Topic"


def test_h3_headings_inline_into_enclosing_section():
    html = wrap("<h2>Main</h2><p>One.</p><h3>Sub</h3><p>Two.</p>")
    (section,) = parse_page(html, URL)
    assert section.body == "One. Sub Two."


def test_tables_and_lists_flatten_to_plain_text():
    html = wrap(
        "<h2>T</h2><table><tr><td>cell one</td><td>cell two</td></tr></table>"
        "<ul><li>item one</li><li>item two</li></ul>"
    )
    (section,) = parse_page(html, URL)
    assert section.body == "cell one cell two item one item two"
    assert "<" not in section.body


def test_navigation_boilerplate_is_stripped():
    html = wrap(
        '<nav>Breadcrumb &gt; Junk</nav><h2>Real</h2><p>Content.</p><footer>Legal junk</footer>'
    )
    (section,) = parse_page(html, URL)
    assert "Junk" not in section.body
    assert section.body == "Content."


def test_main_region_scoping_drops_outside_content():
    html = wrap("<div>Sidebar noise</div><main><h2>In</h2><p>Kept.</p></main><div>More noise</div>")
    (section,) = parse_page(html, URL)
    assert section.body == "Kept."


def test_inline_tags_do_not_split_words():
    html = wrap("<h2>H</h2><p>The <b>ro</b>tation handle.</p>")
    (section,) = parse_page(html, URL)
    assert "rotation" in section.body


def test_unclosed_tags_are_tolerated():
    html = "<body><h2>First<p>Body one<h2>Second</h2><p>Body two</body>"
    sections = parse_page(html, URL)
    assert [s.heading for s in sections] == ["First", "Second"]
    assert sections[0].body == "Body one"


def test_whitespace_normalized_and_word_count_consistent():
    html = wrap("<h2>H</h2><p>  a\n\n b\t\tc   </p>")
    (section,) = parse_page(html, URL)
    assert section.body == "a b c"
    assert section.word_count == 3


def test_section_bodies_preserve_page_text_order():
    words = [f"w{i}" for i in range(30)]
    parts = []
    for i, w in enumerate(words):
        if i % 10 == 0:
            parts.append(f"<h2>h{i}</h2>")
        parts.append(f"<p>{w}</p>")
    sections = parse_page(wrap("".join(parts)), URL)
    assert " ".join(s.body for s in sections).split() == words


def test_parse_page_is_deterministic():
    html = wrap("<h2>A</h2><p>one</p><h2>B</h2><p>two</p>")
    assert parse_page(html, URL) == parse_page(html, URL)


def test_empty_page_raises():
    with pytest.raises(EmptyPage):
        parse_page("<html><body><div></div></body></html>", URL)


def _write_pages(tmp_path, pages: dict[str, str], manifest: list[dict]):
    for name, html in pages.items():
        (tmp_path / name).write_text(html, encoding="utf-8")
    (tmp_path / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")


def test_load_corpus_stats(tmp_path):
    _write_pages(
        tmp_path,
        {
            "a.html": wrap("<h2>1</h2><p>x</p><h2>2</h2><p>y</p><h2>3</h2><p>z</p>"),
            "b.html": wrap("<h2>1</h2><p>x y</p><h2>2</h2><p>z w</p>"),
        },
        [{"file": "a.html", "url": "https://h/a"}, {"file": "b.html", "url": "https://h/b"}],
    )
    corpus = load_corpus(tmp_path)
    assert corpus.stats.n_pages == 2
    assert corpus.stats.n_sections == 5
    assert corpus.stats.avg_sections_per_page == pytest.approx(2.5)


def test_load_corpus_empty_manifest(tmp_path):
    _write_pages(tmp_path, {}, [])
    corpus = load_corpus(tmp_path)
    assert corpus.stats.n_pages == 0
    assert corpus.stats.n_sections == 0


def test_load_corpus_skips_empty_page_with_warning(tmp_path, caplog):
    _write_pages(
        tmp_path,
        {"a.html": wrap("<h2>1</h2><p>x</p>"), "empty.html": "<html><body></body></html>"},
        [{"file": "a.html", "url": "https://h/a"}, {"file": "empty.html", "url": "https://h/e"}],
    )
    with caplog.at_level("WARNING"):
        corpus = load_corpus(tmp_path)
    assert corpus.stats.n_pages == 1
    assert any("no extractable text" in r.message for r in caplog.records)


def test_load_corpus_manifest_mismatch_both_directions(tmp_path):
    _write_pages(tmp_path, {"a.html": wrap("<h2>1</h2><p>x</p>")}, [{"file": "missing.html", "url": "https://h/m"}])
    with pytest.raises(ManifestMismatch):
        load_corpus(tmp_path)

    _write_pages(tmp_path, {"extra.html": wrap("<h2>1</h2><p>x</p>")}, [])
    with pytest.raises(ManifestMismatch):
        load_corpus(tmp_path)


def test_load_corpus_preserves_manifest_order(tmp_path):
    _write_pages(
        tmp_path,
        {"z.html": wrap("<h2>1</h2><p>x</p>"), "a.html": wrap("<h2>1</h2><p>y</p>")},
        [{"file": "z.html", "url": "https://h/z"}, {"file": "a.html", "url": "https://h/a"}],
    )
    corpus = load_corpus(tmp_path)
    assert [s.page_url for s in corpus.sections] == ["https://h/z", "https://h/a"]


def test_load_corpus_from_zip_archive(tmp_path):
    import zipfile

    archive = tmp_path / "pages.zip"
    with zipfile.ZipFile(archive, "w") as zf:
        zf.writestr("a.html", wrap("<h2>1</h2><p>zipped text</p>"))
        zf.writestr("manifest.json", json.dumps([{"file": "a.html", "url": "https://h/a"}]))
    corpus = load_corpus(archive)
    assert corpus.stats.n_sections == 1
    assert corpus.sections[0].body == "zipped text"


def test_table_one_shaped_stats_formula():
    # 113 pages of 9 sections + 33 pages of 8 sections = 1281 sections over 146 pages
    sections = []
    for p in range(146):
        n = 9 if p < 113 else 8
        for s in range(n):
            sections.append(Section(f"https://h/p{p}", s, "h", "a b c", 3))
    stats = compute_stats(sections)
    assert stats.n_pages == 146
    assert stats.n_sections == 1281
    assert stats.avg_sections_per_page == pytest.approx(8.77, abs=0.01)


def _corpus3() -> Corpus:
    return make_corpus(
        [
            Section("https://h/a", 0, "", "intro text", 2),
            Section("https://h/a", 1, "One", "body one", 2),
            Section("https://h/b", 0, "Two", "body two", 2),
        ]
    )


def test_jsonl_round_trip_identity():
    corpus = _corpus3()
    assert jsonl_to_corpus(corpus_to_jsonl(corpus)) == corpus


def test_jsonl_line_keys_exact():
    line = corpus_to_jsonl(_corpus3()).decode("utf-8").splitlines()[0]
    assert set(json.loads(line)) == {"page_url", "section_index", "heading", "body", "word_count"}


def test_jsonl_missing_key_reports_line_number():
    good = corpus_to_jsonl(_corpus3()).decode("utf-8").splitlines()
    bad = dict(json.loads(good[1]))
    del bad["page_url"]
    stream = "\n".join([good[0], json.dumps(bad), good[2]])
    with pytest.raises(SchemaError) as exc:
        jsonl_to_corpus(stream)
    assert exc.value.line == 2


def test_jsonl_word_count_mismatch_rejected():
    record = {"page_url": "https://h/a", "section_index": 0, "heading": "", "body": "two words", "word_count": 5}
    with pytest.raises(SchemaError):
        jsonl_to_corpus(json.dumps(record))


def test_jsonl_duplicate_section_rejected():
    record = {"page_url": "https://h/a", "section_index": 0, "heading": "", "body": "x", "word_count": 1}
    stream = json.dumps(record) + "\n" + json.dumps(record)
    with pytest.raises(SchemaError):
        jsonl_to_corpus(stream)


def test_jsonl_nonconsecutive_index_rejected():
    record = {"page_url": "https://h/a", "section_index": 1, "heading": "", "body": "x", "word_count": 1}
    with pytest.raises(SchemaError):
        jsonl_to_corpus(json.dumps(record))


def test_empty_stream_gives_empty_corpus():
    corpus = jsonl_to_corpus(b"")
    assert corpus.sections == ()
    assert corpus.stats.n_pages == 0


def test_word_count_matches_whitespace_tokens_for_parsed_pages():
    html = wrap("<h2>A</h2><p>one two  three</p><h2>B</h2><ul><li>four</li><li>five six</li></ul>")
    for section in parse_page(html, URL):
        assert section.word_count == len(section.body.split())
