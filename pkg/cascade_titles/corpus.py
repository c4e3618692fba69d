"""Job posting records, dataset ingestion and the O*NET/SOC taxonomy.

Datasets are UTF-8 line-delimited JSON, one posting per line:

    {"id": "a", "title": "Java Developer", "description": "...",
     "requirements": "...", "soc": "15-1132.00", "titles": ["java developer"]}

Only `id` and `title` are required.
"""

from __future__ import annotations

import re
import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping

from panpath import PanPath

from .utils import (
    RecordParseError,
    SocFormatError,
    SocRangeError,
    ValidationError,
    numbered_lines,
)

if TYPE_CHECKING:  # pragma: no cover
    from typing import Optional

SOC_PATTERN = re.compile(r"^(\d{2})-(\d{4})\.(\d{2})$")
MAJOR_MIN = 11
MAJOR_MAX = 55

# SOC 2010 major groups
MAJOR_GROUPS = MappingProxyType(
    {
        11: "Management",
        13: "Business and Financial Operations",
        15: "Computer and Mathematical",
        17: "Architecture and Engineering",
        19: "Life, Physical, and Social Science",
        21: "Community and Social Service",
        23: "Legal",
        25: "Education, Training, and Library",
        27: "Arts, Design, Entertainment, Sports, and Media",
        29: "Healthcare Practitioners and Technical",
        31: "Healthcare Support",
        33: "Protective Service",
        35: "Food Preparation and Serving Related",
        37: "Building and Grounds Cleaning and Maintenance",
        39: "Personal Care and Service",
        41: "Sales and Related",
        43: "Office and Administrative Support",
        45: "Farming, Fishing, and Forestry",
        47: "Construction and Extraction",
        49: "Installation, Maintenance, and Repair",
        51: "Production",
        53: "Transportation and Material Moving",
        55: "Military Specific",
    }
)


@dataclass(frozen=True)
class SocCode:
    """A four-level occupational code, e.g. 15-1132.00"""

    major: int
    minor: int
    broad: int
    detailed: str

    def render(self) -> str:
        return f"{self.major:02d}-{self.broad:04d}.{self.detailed}"

    def __str__(self) -> str:
        return self.render()


def derive_minor(broad: int) -> int:
    """Zero the last digit of a broad group (1132 -> 1130)"""
    return broad - broad % 10


def parse_soc_code(text: str) -> SocCode:
    """Parse "MM-BBBB.DD" into a SocCode

    Raises:
        SocFormatError: when the text does not match the pattern
        SocRangeError: when the major group is outside [11, 55]
    """
    match = SOC_PATTERN.match(str(text).strip())
    if not match:
        raise SocFormatError(f"invalid SOC code: {text!r}")

    major = int(match.group(1))
    if not MAJOR_MIN <= major <= MAJOR_MAX:
        raise SocRangeError(
            f"SOC major group {major} outside [{MAJOR_MIN}, {MAJOR_MAX}]: {text!r}"
        )

    broad = int(match.group(2))
    return SocCode(
        major=major,
        minor=derive_minor(broad),
        broad=broad,
        detailed=match.group(3),
    )


def major_group(code: SocCode) -> int:
    return code.major


def major_group_name(major: int) -> str:
    return MAJOR_GROUPS.get(major, "")


@dataclass(frozen=True)
class Document:
    """A job posting"""

    id: str
    title: str
    description: str = ""
    requirements: str = ""
    gold_soc: Optional[SocCode] = None
    gold_titles: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if not self.id:
            raise ValidationError("document id must not be empty")
        if not self.title.strip():
            raise ValidationError(f"document {self.id!r} has an empty title")

    @property
    def full_text(self) -> str:
        return " ".join(
            part for part in (self.title, self.description, self.requirements) if part
        )

    def text(self, field_name: str) -> str:
        """Text of the "title" field or the "full" posting"""
        return self.title if field_name == "title" else self.full_text


@dataclass(frozen=True)
class DocumentSet:
    """Ordered documents with unique ids, indexed by gold major group"""

    docs: tuple[Document, ...] = ()
    label_index: Mapping[int, tuple[str, ...]] = field(
        default_factory=lambda: MappingProxyType({})
    )

    @classmethod
    def from_documents(cls, docs: Iterable[Document]) -> DocumentSet:
        docs = tuple(docs)
        seen = set()
        index: dict[int, list[str]] = {}
        for doc in docs:
            if doc.id in seen:
                raise ValidationError(f"duplicate document id: {doc.id!r}")
            seen.add(doc.id)
            if doc.gold_soc is not None:
                index.setdefault(doc.gold_soc.major, []).append(doc.id)

        return cls(
            docs=docs,
            label_index=MappingProxyType(
                {major: tuple(ids) for major, ids in sorted(index.items())}
            ),
        )

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.docs)

    def __getitem__(self, index: int) -> Document:
        return self.docs[index]

    @property
    def by_id(self) -> Mapping[str, Document]:
        return {doc.id: doc for doc in self.docs}

    @property
    def labeled(self) -> DocumentSet:
        return self.subset(doc for doc in self.docs if doc.gold_soc is not None)

    def subset(self, docs: Iterable[Document]) -> DocumentSet:
        return DocumentSet.from_documents(docs)

    def take(self, positions: Iterable[int]) -> DocumentSet:
        """Documents at the given positions, in input order"""
        return self.subset(self.docs[i] for i in sorted(positions))


def _optional_text(record: dict, key: str, lineno: int) -> str:
    value = record.get(key)
    if value is None:
        return ""
    if not isinstance(value, str):
        raise RecordParseError(f"line {lineno}: field {key!r} must be a string")
    return value


def parse_record(line: str, lineno: int) -> Document:
    """Parse one dataset line into a Document"""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise RecordParseError(f"line {lineno}: {e.msg}") from None

    if not isinstance(record, dict):
        raise RecordParseError(f"line {lineno}: record must be an object")

    doc_id = record.get("id")
    if isinstance(doc_id, int) and not isinstance(doc_id, bool):
        doc_id = str(doc_id)
    if not isinstance(doc_id, str) or not doc_id:
        raise RecordParseError(f"line {lineno}: missing or invalid 'id'")

    title = record.get("title")
    if not isinstance(title, str) or not title.strip():
        raise RecordParseError(f"line {lineno}: missing or empty 'title'")

    soc = record.get("soc")
    try:
        gold_soc = parse_soc_code(soc) if soc else None
    except SocFormatError as e:
        raise type(e)(f"line {lineno}: {e}") from None

    titles = record.get("titles")
    if titles is not None:
        if not isinstance(titles, list) or not all(
            isinstance(t, str) for t in titles
        ):
            raise RecordParseError(
                f"line {lineno}: 'titles' must be a list of strings"
            )
        titles = tuple(titles)

    return Document(
        id=doc_id,
        title=title,
        description=_optional_text(record, "description", lineno),
        requirements=_optional_text(record, "requirements", lineno),
        gold_soc=gold_soc,
        gold_titles=titles,
    )


def parse_jsonl(data: str | bytes) -> DocumentSet:
    """Parse dataset text or UTF-8 bytes; blank lines are skipped"""
    docs = [
        parse_record(line, lineno)
        for lineno, line in numbered_lines(data)
        if line.strip()
    ]
    return DocumentSet.from_documents(docs)


async def load_jsonl(path: str | PanPath) -> DocumentSet:
    """Load a line-delimited dataset, local or cloud

    Raises:
        OSError: when the file cannot be read
        RecordParseError: on a malformed line, naming the line number
        ValidationError: on a duplicate id
    """
    return parse_jsonl(await PanPath(path).a_read_bytes())


def document_record(doc: Document) -> dict:
    """Inverse of parse_record"""
    record = {"id": doc.id, "title": doc.title}
    if doc.description:
        record["description"] = doc.description
    if doc.requirements:
        record["requirements"] = doc.requirements
    if doc.gold_soc is not None:
        record["soc"] = doc.gold_soc.render()
    if doc.gold_titles is not None:
        record["titles"] = list(doc.gold_titles)
    return record


def parse_reference(data: str | bytes) -> dict[str, SocCode]:
    """{"id", "soc"} lines of another tagger, keyed by document id"""
    out = {}
    for lineno, line in numbered_lines(data):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            doc_id, soc = str(record["id"]), record["soc"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise RecordParseError(
                f"line {lineno}: reference records need 'id' and 'soc'"
            ) from None
        try:
            out[doc_id] = parse_soc_code(soc)
        except SocFormatError as e:
            raise type(e)(f"line {lineno}: {e}") from None
    return out


async def load_reference(path: str | PanPath) -> dict[str, SocCode]:
    return parse_reference(await PanPath(path).a_read_bytes())
