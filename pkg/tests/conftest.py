import json
import asyncio

import numpy as np
import pytest
from panpath import PanPath

from cascade_titles.cascade import train_cascade
from cascade_titles.corpus import (
    Document,
    DocumentSet,
    document_record,
    parse_soc_code,
)

# major group -> (SOC code, description words, title clusters)
GROUPS = {
    "15": (
        "15-1132.00",
        ["software", "code", "compile", "debug", "deploy", "repository",
         "backend", "frontend"],
        ["Java Developer", "Python Programmer", "Database Administrator",
         "Network Architect"],
    ),
    "29": (
        "29-1141.00",
        ["patient", "clinic", "medication", "ward", "hospital", "bedside",
         "triage", "vitals"],
        ["Registered Nurse", "Physical Therapist", "Dental Hygienist",
         "Pharmacy Technician"],
    ),
    "43": (
        "43-4051.00",
        ["customer", "phone", "invoice", "schedule", "filing", "reception",
         "spreadsheet", "calls"],
        ["Office Clerk", "Billing Specialist", "Payroll Coordinator",
         "Front Desk"],
    ),
}


def make_documents(groups=("15", "29"), sizes=(9, 7, 6, 5), seed=0, desc_words=4):
    """Postings with disjoint vocabularies per group and per title cluster.

    Each group gets one title cluster per entry of `sizes`, every posting
    of a cluster carrying the very same title.
    """
    rng = np.random.default_rng(seed)
    docs = []
    for major in groups:
        soc, words, titles = GROUPS[major]
        for cluster, size in enumerate(sizes):
            for j in range(size):
                title = titles[cluster]
                docs.append(
                    Document(
                        id=f"{major}-{cluster}-{j}",
                        title=title.upper() if j % 3 == 0 else title,
                        description=" ".join(rng.choice(words, desc_words)),
                        gold_soc=parse_soc_code(soc),
                        gold_titles=(title.lower(),),
                    )
                )
    return [docs[i] for i in rng.permutation(len(docs))]


def jsonl(docs) -> str:
    return "".join(json.dumps(document_record(doc)) + "\n" for doc in docs)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """
    Create a temporary workdir for tests.
    Uses local filesystem instead of cloud storage for faster, isolated tests.
    """
    workdir = tmp_path_factory.mktemp("cascade_titles_test")
    return PanPath(workdir)


@pytest.fixture
def corpus_file(tmp_path):
    """Factory writing a synthetic labelled corpus, returns its path"""

    def write(name="corpus.jsonl", **kwargs):
        path = tmp_path / name
        path.write_text(jsonl(make_documents(**kwargs)))
        return str(path)

    return write


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory):
    """A cascade trained on the default synthetic corpus, saved once.

    Returns the directory holding `corpus.jsonl` and `model/`.
    """
    directory = tmp_path_factory.mktemp("trained")
    docs = make_documents()
    (directory / "corpus.jsonl").write_text(jsonl(docs))
    model = train_cascade(DocumentSet.from_documents(docs))
    asyncio.run(model.save(str(directory / "model")))
    return directory
