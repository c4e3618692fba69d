import json
from argparse import Namespace

import pytest

from cascade_titles.cascade import CascadePrediction
from cascade_titles.commands.classify import format_prediction, run


def classify_args(model, input=None, **kwargs):
    return Namespace(
        model=model,
        input=input,
        title=kwargs.get("title"),
        k=kwargs.get("k"),
        output=kwargs.get("output"),
        verbose=False,
    )


def test_format_prediction():
    prediction = CascadePrediction(
        "15", {"15": 1.0}, (("developer", 0.923879532), ("java", 0.5))
    )
    assert format_prediction("a", prediction) == "a\t15\tdeveloper:0.92388|java:0.5\t0"
    assert format_prediction("b", CascadePrediction("29")) == "b\t29\t-\t1"
    assert format_prediction("c", CascadePrediction(None)) == "c\t-\t-\t1"


class TestClassify:
    async def test_classify_title(self, trained_model, capsys):
        await run(
            classify_args(str(trained_model / "model"), title="registered nurse")
        )
        assert capsys.readouterr().out == "-\thealthcare\tnurse:1\t0\n"

    async def test_classify_file(self, trained_model, capsys):
        await run(
            classify_args(
                str(trained_model / "model"), str(trained_model / "corpus.jsonl"), k=2
            )
        )
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 54
        for line in lines:
            doc_id, group, fine, abstained = line.split("\t")
            expected = "15" if doc_id.startswith("15-") else "healthcare"
            assert group == expected
            assert abstained == "0"
            assert len(fine.split("|")) <= 2

    async def test_classify_output_file(self, trained_model, tmp_path, capsys):
        output = tmp_path / "predictions.tsv"
        await run(
            classify_args(
                str(trained_model / "model"),
                title="Java Developer",
                output=str(output),
            )
        )
        assert capsys.readouterr().out == ""
        assert output.read_text() == "-\t15\tdeveloper:1\t0\n"

    async def test_classify_unknown_title_abstains(self, trained_model, capsys):
        await run(classify_args(str(trained_model / "model"), title="zookeeper"))
        _, _, fine, abstained = capsys.readouterr().out.rstrip("\n").split("\t")
        assert (fine, abstained) == ("-", "1")

    async def test_classify_empty_input(self, trained_model, tmp_path, capsys):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        await run(classify_args(str(trained_model / "model"), str(path)))
        assert capsys.readouterr().out == ""

    async def test_classify_flat_model(self, tmp_path, capsys):
        from cascade_titles.commands.cluster import run as cluster_run

        path = tmp_path / "titles.jsonl"
        path.write_text(
            "".join(
                json.dumps({"id": f"{i}", "title": title}) + "\n"
                for i, title in enumerate(["Java Developer"] * 5 + ["Nurse"] * 5)
            )
        )
        await cluster_run(
            Namespace(
                input=str(path),
                output=str(tmp_path / "flat"),
                config=None,
                set=[],
                verbose=False,
            )
        )
        capsys.readouterr()
        await run(classify_args(str(tmp_path / "flat"), title="nurse"))
        assert capsys.readouterr().out == "-\t-\tnurse:1\t0\n"

    async def test_classify_corrupted_manifest(self, trained_model, tmp_path, capsys):
        import shutil

        model = tmp_path / "model"
        shutil.copytree(trained_model / "model", model)
        (model / "manifest.json").write_text("{corrupted")
        with pytest.raises(SystemExit) as exc_info:
            await run(classify_args(str(model), title="nurse"))
        assert exc_info.value.code == 4
        assert "corrupted manifest" in capsys.readouterr().err

    async def test_classify_tampered_file(self, trained_model, tmp_path, capsys):
        import shutil

        model = tmp_path / "model"
        shutil.copytree(trained_model / "model", model)
        with (model / "stopwords.txt").open("a") as fh:
            fh.write("developer\n")
        with pytest.raises(SystemExit) as exc_info:
            await run(classify_args(str(model), title="nurse"))
        assert exc_info.value.code == 4
        assert "checksum mismatch for stopwords.txt" in capsys.readouterr().err

    async def test_classify_edited_manifest(self, trained_model, tmp_path, capsys):
        import shutil

        model = tmp_path / "model"
        shutil.copytree(trained_model / "model", model)
        manifest = json.loads((model / "manifest.json").read_text())
        manifest["groups"] = manifest["groups"][::-1]
        (model / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(SystemExit) as exc_info:
            await run(classify_args(str(model), title="registered nurse"))
        assert exc_info.value.code == 4
        assert "checksum mismatch for manifest.json" in capsys.readouterr().err

    async def test_classify_missing_model(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc_info:
            await run(classify_args(str(tmp_path / "nomodel"), title="nurse"))
        assert exc_info.value.code == 2
        assert "nomodel" in capsys.readouterr().err

    async def test_classify_missing_input(self, trained_model, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc_info:
            await run(
                classify_args(str(trained_model / "model"), str(tmp_path / "no.jsonl"))
            )
        assert exc_info.value.code == 2
        assert "no.jsonl" in capsys.readouterr().err

    async def test_classify_needs_one_source(self, trained_model, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc_info:
            await run(classify_args(str(trained_model / "model")))
        assert exc_info.value.code == 2

        with pytest.raises(SystemExit) as exc_info:
            await run(
                classify_args(str(trained_model / "model"), "x.jsonl", title="nurse")
            )
        assert exc_info.value.code == 2
        assert "mutually exclusive" in capsys.readouterr().err
