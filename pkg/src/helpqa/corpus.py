"""Help-page ingestion: H2-delimited section parsing, corpus loading, JSONL serialization.

Pages are segmented into non-overlapping sections at H2 headings. Anchor tags are
flattened to their visible text, images are dropped entirely (alt text included),
and whitespace is normalized so a section body is plain single-spaced text.
"""

from __future__ import annotations

import json
import logging
import zipfile
from dataclasses import dataclass
from html.parser import HTMLParser
from pathlib import Path
from typing import IO, Iterable

from .errors import EmptyPage, ManifestMismatch, SchemaError

logger = logging.getLogger(__name__)

SECTION_KEYS = ("page_url", "section_index", "heading", "body", "word_count")

# Elements whose content is never visible text.
_SKIP_TAGS = {"script", "style", "noscript", "template", "head", "svg", "iframe"}
# Navigation boilerplate stripped when it encloses content (breadcrumbs, footers).
_BOILERPLATE_TAGS = {"nav", "header", "footer", "aside"}
# Tags that imply a word boundary around their content.
_BLOCK_TAGS = {
    "p", "div", "section", "article", "main", "li", "ul", "ol", "dl", "dt", "dd",
    "table", "thead", "tbody", "tr", "td", "th", "caption", "blockquote", "pre",
    "figure", "figcaption", "h1", "h2", "h3", "h4", "h5", "h6", "form", "fieldset",
}
_VOID_TAGS = {
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta",
    "param", "source", "track", "wbr",
}
_MAIN_ID_HINTS = {"main", "content", "main-content", "maincontent", "page-content"}


@dataclass(frozen=True)
class Section:
    """One H2-delimited slice of a help page."""

    page_url: str
    section_index: int
    heading: str
    body: str
    word_count: int

    @property
    def ref(self) -> tuple[str, int]:
        return (self.page_url, self.section_index)


@dataclass(frozen=True)
class CorpusStats:
    n_pages: int
    n_sections: int
    avg_sections_per_page: float
    avg_section_words: float


@dataclass(frozen=True)
class Corpus:
    sections: tuple[Section, ...]
    stats: CorpusStats

    def section_lookup(self) -> dict[tuple[str, int], Section]:
        return {s.ref: s for s in self.sections}

    def page_urls(self) -> set[str]:
        return {s.page_url for s in self.sections}


def compute_stats(sections: Iterable[Section]) -> CorpusStats:
    sections = list(sections)
    pages = {s.page_url for s in sections}
    n_pages = len(pages)
    n_sections = len(sections)
    return CorpusStats(
        n_pages=n_pages,
        n_sections=n_sections,
        avg_sections_per_page=(n_sections / n_pages) if n_pages else 0.0,
        avg_section_words=(sum(s.word_count for s in sections) / n_sections) if n_sections else 0.0,
    )


def make_corpus(sections: Iterable[Section]) -> Corpus:
    sections = tuple(sections)
    seen: set[tuple[str, int]] = set()
    for s in sections:
        if s.ref in seen:
            raise ValueError(f"duplicate section ref {s.ref}")
        seen.add(s.ref)
    return Corpus(sections=sections, stats=compute_stats(sections))


class _MainProbe(HTMLParser):
    """First pass: detect the strongest main-content marker present, if any."""

    # Priority: explicit <main> > role="main" > <article> > id hint.
    _PRIORITY = {"main_tag": 0, "role_main": 1, "article": 2, "id_hint": 3}

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.kind: str | None = None

    def _offer(self, kind: str) -> None:
        if self.kind is None or self._PRIORITY[kind] < self._PRIORITY[self.kind]:
            self.kind = kind

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        amap = dict(attrs)
        if tag == "main":
            self._offer("main_tag")
        if (amap.get("role") or "").lower() == "main":
            self._offer("role_main")
        if tag == "article":
            self._offer("article")
        if (amap.get("id") or "").lower() in _MAIN_ID_HINTS:
            self._offer("id_hint")


def _matches_scope(kind: str, tag: str, amap: dict[str, str | None]) -> bool:
    if kind == "main_tag":
        return tag == "main"
    if kind == "role_main":
        return (amap.get("role") or "").lower() == "main"
    if kind == "article":
        return tag == "article"
    return (amap.get("id") or "").lower() in _MAIN_ID_HINTS


class _SectionExtractor(HTMLParser):
    """Second pass: linear scan splitting visible text at H2 boundaries.

    The stdlib tokenizer never raises on malformed markup; unclosed tags are
    recovered by popping the open-tag stack to the nearest match and by
    implicitly closing an open H2 when the next block element starts.
    """

    def __init__(self, scope_kind: str | None) -> None:
        super().__init__(convert_charrefs=True)
        self.scope_kind = scope_kind
        self.in_scope = scope_kind is None
        # Stack entries: (tag, is_skip, is_scope_entry)
        self.stack: list[tuple[str, bool, bool]] = []
        self.skip_depth = 0
        self.in_heading = False
        self.heading_parts: list[str] = []
        self.body_parts: list[str] = []
        self.raw_sections: list[tuple[str, str]] = []

    def _suppressed(self) -> bool:
        return self.skip_depth > 0 or not self.in_scope

    def _flush_section(self) -> None:
        # heading_parts were captured when the flushed region's H2 opened
        self.raw_sections.append((_squash(self.heading_parts), _squash(self.body_parts)))
        self.heading_parts = []
        self.body_parts = []

    def _close_heading(self) -> None:
        self.in_heading = False

    def handle_starttag(self, tag: str, attrs: list[tuple[str, str | None]]) -> None:
        if tag in _VOID_TAGS:
            if tag in ("br", "hr") and not self._suppressed() and not self.in_heading:
                self.body_parts.append("\n")
            return  # img and friends contribute nothing, alt text included

        amap = dict(attrs)
        is_scope_entry = False
        if not self.in_scope and self.scope_kind and _matches_scope(self.scope_kind, tag, amap):
            self.in_scope = True
            is_scope_entry = True

        is_skip = tag in _SKIP_TAGS or tag in _BOILERPLATE_TAGS
        self.stack.append((tag, is_skip, is_scope_entry))
        if is_skip:
            self.skip_depth += 1

        if self._suppressed():
            return

        if self.in_heading and (tag in _BLOCK_TAGS or tag == "h2"):
            # Recover from an unclosed <h2>: browsers close it at the next block.
            self._close_heading()

        if tag == "h2":
            self._flush_section()
            self.in_heading = True
        elif tag in _BLOCK_TAGS:
            target = self.heading_parts if self.in_heading else self.body_parts
            target.append("\n")

    def handle_endtag(self, tag: str) -> None:
        if tag in _VOID_TAGS:
            return
        # Pop to the nearest matching open tag; ignore stray close tags.
        for i in range(len(self.stack) - 1, -1, -1):
            if self.stack[i][0] == tag:
                for popped_tag, was_skip, was_scope in reversed(self.stack[i:]):
                    if was_skip:
                        self.skip_depth -= 1
                    if was_scope:
                        self.in_scope = self.scope_kind is None
                    if popped_tag == "h2" and self.in_heading:
                        self._close_heading()
                del self.stack[i:]
                break
        if not self._suppressed() and tag in _BLOCK_TAGS and not self.in_heading:
            self.body_parts.append("\n")

    def handle_data(self, data: str) -> None:
        if self._suppressed() or not data:
            return
        if self.in_heading:
            self.heading_parts.append(data)
        else:
            self.body_parts.append(data)

    def finish(self) -> list[tuple[str, str]]:
        self._flush_section()
        return self.raw_sections


def _squash(parts: list[str]) -> str:
    """Collapse whitespace runs to single spaces without splitting words across inline tags."""
    return " ".join("".join(parts).split())


def parse_page(raw_html: str, page_url: str) -> list[Section]:
    """Split one help page into its H2-delimited sections, in document order.

    Content before the first H2 becomes section 0 with an empty heading (dropped when
    empty). Raises EmptyPage when the page yields no text at all.
    """
    probe = _MainProbe()
    probe.feed(raw_html)
    probe.close()

    extractor = _SectionExtractor(probe.kind)
    extractor.feed(raw_html)
    extractor.close()
    regions = extractor.finish()

    if regions and regions[0] == ("", ""):
        regions = regions[1:]
    if not regions or all(h == "" and b == "" for h, b in regions):
        raise EmptyPage(f"no extractable text in {page_url}")

    return [
        Section(
            page_url=page_url,
            section_index=i,
            heading=heading,
            body=body,
            word_count=len(body.split()),
        )
        for i, (heading, body) in enumerate(regions)
    ]


def _read_manifest(entries: object) -> list[tuple[str, str]]:
    if not isinstance(entries, list):
        raise ManifestMismatch("manifest must be a JSON array of {file, url} objects")
    out: list[tuple[str, str]] = []
    seen_files: set[str] = set()
    seen_urls: set[str] = set()
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "file" not in entry or "url" not in entry:
            raise ManifestMismatch(f"manifest entry {i} must carry both 'file' and 'url'")
        file, url = str(entry["file"]), str(entry["url"])
        if not file or not url:
            raise ManifestMismatch(f"manifest entry {i} has an empty file or url")
        if file in seen_files:
            raise ManifestMismatch(f"duplicate manifest file {file!r}")
        if url in seen_urls:
            raise ManifestMismatch(f"duplicate manifest url {url!r}")
        seen_files.add(file)
        seen_urls.add(url)
        out.append((file, url))
    return out


def load_corpus(path: str | Path, manifest_name: str = "manifest.json") -> Corpus:
    """Load a corpus from a directory (or .zip archive) of page files plus a URL manifest.

    Pages are parsed in manifest order; a page with no extractable text is skipped
    with a warning. Page files present on disk but absent from the manifest (or the
    reverse) raise ManifestMismatch.
    """
    path = Path(path)
    if path.is_file() and path.suffix == ".zip":
        with zipfile.ZipFile(path) as zf:
            names = set(zf.namelist())
            if manifest_name not in names:
                raise ManifestMismatch(f"archive has no {manifest_name}")
            manifest = _read_manifest(json.loads(zf.read(manifest_name).decode("utf-8")))
            page_files = {n for n in names if n.endswith(".html")}
            reader = lambda name: zf.read(name).decode("utf-8", errors="replace")
            return _load_pages(manifest, page_files, reader)

    manifest_path = path / manifest_name
    if not manifest_path.is_file():
        raise ManifestMismatch(f"{manifest_path} not found")
    manifest = _read_manifest(json.loads(manifest_path.read_text(encoding="utf-8")))
    page_files = {p.relative_to(path).as_posix() for p in path.rglob("*.html")}
    reader = lambda name: (path / name).read_text(encoding="utf-8", errors="replace")
    return _load_pages(manifest, page_files, reader)


def _load_pages(manifest: list[tuple[str, str]], page_files: set[str], reader) -> Corpus:
    listed = {f for f, _ in manifest}
    missing = sorted(listed - page_files)
    if missing:
        raise ManifestMismatch(f"manifest lists files not present: {missing}")
    unlisted = sorted(page_files - listed)
    if unlisted:
        raise ManifestMismatch(f"page files missing from manifest: {unlisted}")

    sections: list[Section] = []
    for file, url in manifest:
        try:
            sections.extend(parse_page(reader(file), url))
        except EmptyPage:
            logger.warning("skipping page with no extractable text: %s (%s)", file, url)
    return make_corpus(sections)


def corpus_to_jsonl(corpus: Corpus) -> bytes:
    """Serialize a corpus: one Section object per line, UTF-8."""
    lines = []
    for s in corpus.sections:
        record = {
            "page_url": s.page_url,
            "section_index": s.section_index,
            "heading": s.heading,
            "body": s.body,
            "word_count": s.word_count,
        }
        lines.append(json.dumps(record, ensure_ascii=False))
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def jsonl_to_corpus(stream: bytes | str | IO) -> Corpus:
    """Parse a sections JSONL stream back into a Corpus.

    Strict round-trip contract: every line must carry exactly the Section keys with
    consistent word counts and per-page section indexes consecutive from 0.
    Violations raise SchemaError with the offending line number.
    """
    if isinstance(stream, bytes):
        text = stream.decode("utf-8")
    elif isinstance(stream, str):
        text = stream
    else:
        raw = stream.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    sections: list[Section] = []
    seen: set[tuple[str, int]] = set()
    next_index: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(f"invalid JSON: {e.msg}", line=lineno) from e
        if not isinstance(record, dict):
            raise SchemaError("expected a JSON object", line=lineno)
        if set(record) != set(SECTION_KEYS):
            raise SchemaError(
                f"keys must be exactly {list(SECTION_KEYS)}, got {sorted(record)}", line=lineno
            )
        page_url, section_index = record["page_url"], record["section_index"]
        heading, body, word_count = record["heading"], record["body"], record["word_count"]
        if not isinstance(page_url, str) or not page_url:
            raise SchemaError("page_url must be a non-empty string", line=lineno)
        if not isinstance(section_index, int) or isinstance(section_index, bool) or section_index < 0:
            raise SchemaError("section_index must be an integer >= 0", line=lineno)
        if not isinstance(heading, str) or not isinstance(body, str):
            raise SchemaError("heading and body must be strings", line=lineno)
        if not isinstance(word_count, int) or isinstance(word_count, bool) or word_count < 0:
            raise SchemaError("word_count must be an integer >= 0", line=lineno)
        if word_count != len(body.split()):
            raise SchemaError("word_count does not match the body's token count", line=lineno)
        if (page_url, section_index) in seen:
            raise SchemaError(f"duplicate section ({page_url}, {section_index})", line=lineno)
        if section_index != next_index.get(page_url, 0):
            raise SchemaError(
                f"section_index {section_index} breaks the consecutive ordering for {page_url}",
                line=lineno,
            )
        seen.add((page_url, section_index))
        next_index[page_url] = section_index + 1
        sections.append(Section(page_url, section_index, heading, body, word_count))

    return make_corpus(sections)
