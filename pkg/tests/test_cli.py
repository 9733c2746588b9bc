import json
from pathlib import Path

import pytest

from xcompose.cli import main
from xcompose.evaluation import aggregate_rubric
from xcompose.model import RubricScore, deserialize_article


def write_images_file(path: Path, n=12) -> Path:
    uris = "\n".join(f"https://img.example/{i}.jpg" for i in range(n))
    path.write_text(uris + "\n", encoding="utf-8")
    return path


@pytest.fixture
def index_dir(tmp_path):
    images = write_images_file(tmp_path / "images.txt")
    out = tmp_path / "index"
    code = main(["ingest", "--images", str(images), "--index-dir", str(out), "--stub", "--dim", "16"])
    assert code == 0
    return out


class TestIngest:
    def test_counts_and_dimension(self, tmp_path, capsys):
        images = write_images_file(tmp_path / "images.txt", n=3)
        code = main(["ingest", "--images", str(images), "--index-dir", str(tmp_path / "idx"),
                     "--stub", "--dim", "8"])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary == {"count": 3, "dimension": 8}

    def test_empty_file_fails(self, tmp_path, capsys):
        empty = tmp_path / "none.txt"
        empty.write_text("", encoding="utf-8")
        code = main(["ingest", "--images", str(empty), "--index-dir", str(tmp_path / "idx"), "--stub"])
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["code"] == "EmptyInput"

    def test_rerun_is_idempotent(self, tmp_path):
        images = write_images_file(tmp_path / "images.txt", n=5)
        out = tmp_path / "idx"
        assert main(["ingest", "--images", str(images), "--index-dir", str(out), "--stub", "--dim", "8"]) == 0
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        assert main(["ingest", "--images", str(images), "--index-dir", str(out), "--stub", "--dim", "8"]) == 0
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        assert first == second


class TestCompose:
    def test_seeded_run_matches_golden(self, index_dir, tmp_path):
        out = tmp_path / "run"
        code = main(["compose", "--instruction", "A walk through old Kyoto",
                     "--index-dir", str(index_dir), "--out", str(out),
                     "--stub", "--dim", "16", "--seed", "7", "--m", "4"])
        assert code == 0
        article = deserialize_article((out / "article.json").read_bytes())
        assert article.instruction == "A walk through old Kyoto"
        assert article.slots

    def test_missing_index_fails(self, tmp_path, capsys):
        code = main(["compose", "--instruction", "x", "--index-dir", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "out"), "--stub"])
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["code"] == "FileNotFound"

    def test_top1_selection_flag(self, index_dir, tmp_path):
        out = tmp_path / "run_top1"
        code = main(["compose", "--instruction", "A walk through old Kyoto",
                     "--index-dir", str(index_dir), "--out", str(out),
                     "--stub", "--dim", "16", "--seed", "7", "--selection", "top1"])
        assert code == 0
        article = deserialize_article((out / "article.json").read_bytes())
        assert article.slots
        for slot in article.slots:
            assert slot.selected == slot.candidates[0]

    def test_byte_identical_across_runs(self, index_dir, tmp_path):
        outputs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            assert main(["compose", "--instruction", "Tea houses of the east hills",
                         "--index-dir", str(index_dir), "--out", str(out),
                         "--stub", "--dim", "16", "--seed", "3"]) == 0
            outputs.append(((out / "article.json").read_bytes(), (out / "trace.jsonl").read_bytes()))
        assert outputs[0] == outputs[1]


class TestEvaluate:
    def test_two_articles_two_rows(self, index_dir, tmp_path, capsys):
        articles_dir = tmp_path / "articles"
        articles_dir.mkdir()
        for k, instruction in enumerate(["Old lanes", "River market"]):
            out = tmp_path / f"c{k}"
            assert main(["compose", "--instruction", instruction, "--index-dir", str(index_dir),
                         "--out", str(out), "--stub", "--dim", "16", "--seed", str(k)]) == 0
            (articles_dir / f"a{k}.json").write_bytes((out / "article.json").read_bytes())
        csv_path = tmp_path / "reports.csv"
        code = main(["evaluate", "--articles", str(articles_dir), "--out", str(csv_path),
                     "--stub", "--runs", "3", "--seed", "5"])
        assert code == 0
        lines = csv_path.read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 rows
        header = lines[0].split(",")
        for line in lines[1:]:
            cols = dict(zip(header, line.split(",")))
            assert cols["error"] == ""
            assert int(cols["runs_valid"]) + int(cols["runs_invalid"]) == 3
            dims = [round(float(cols[d])) for d in
                    ("instruction_following", "writing_quality", "logic", "factualness",
                     "image_text_consistency", "image_informative", "image_consistency",
                     "subjective_preference")]
            if all(float(cols[d]) == int(float(cols[d])) for d in header[6:14]):
                agg = aggregate_rubric(RubricScore(*dims))
                assert float(cols["overall"]) == pytest.approx(agg.overall)

    def test_seeded_evaluate_is_bit_reproducible(self, index_dir, tmp_path):
        articles_dir = tmp_path / "articles"
        articles_dir.mkdir()
        out = tmp_path / "c"
        assert main(["compose", "--instruction", "Old lanes", "--index-dir", str(index_dir),
                     "--out", str(out), "--stub", "--dim", "16", "--seed", "4"]) == 0
        (articles_dir / "a.json").write_bytes((out / "article.json").read_bytes())
        outputs = []
        for k in range(2):
            csv_path = tmp_path / f"r{k}.csv"
            assert main(["evaluate", "--articles", str(articles_dir), "--out", str(csv_path),
                         "--stub", "--runs", "3", "--seed", "9"]) == 0
            outputs.append(csv_path.read_bytes())
        assert outputs[0] == outputs[1]

    def test_all_runs_invalid_yields_failure_row(self, index_dir, tmp_path, monkeypatch):
        import xcompose.cli as cli_module
        from xcompose.backends import StubGenerator

        articles_dir = tmp_path / "articles"
        articles_dir.mkdir()
        out = tmp_path / "c"
        assert main(["compose", "--instruction", "Old lanes", "--index-dir", str(index_dir),
                     "--out", str(out), "--stub", "--dim", "16", "--seed", "1"]) == 0
        (articles_dir / "a.json").write_bytes((out / "article.json").read_bytes())
        monkeypatch.setattr(cli_module, "_judge",
                            lambda config: StubGenerator.from_map({}, default="no scores here"))
        csv_path = tmp_path / "reports.csv"
        code = main(["evaluate", "--articles", str(articles_dir), "--out", str(csv_path),
                     "--stub", "--runs", "3", "--seed", "5"])
        assert code == 0
        lines = csv_path.read_text().strip().splitlines()
        cols = dict(zip(lines[0].split(","), lines[1].split(",")))
        assert cols["error"] == "AllRunsInvalid"
        assert cols["runs_valid"] == "0"


class TestCurate:
    def test_report_and_cleaned_output(self, index_dir, tmp_path, capsys):
        articles_dir = tmp_path / "raw"
        articles_dir.mkdir()
        out = tmp_path / "c"
        assert main(["compose", "--instruction", "Hills in spring", "--index-dir", str(index_dir),
                     "--out", str(out), "--stub", "--dim", "16", "--seed", "2"]) == 0
        (articles_dir / "a.json").write_bytes((out / "article.json").read_bytes())
        clean_dir = tmp_path / "cleaned"
        code = main(["curate", "--articles", str(articles_dir), "--out", str(clean_dir), "--stub"])
        assert code == 0
        report_lines = (clean_dir / "curation_report.jsonl").read_text().strip().splitlines()
        assert len(report_lines) == 1
        row = json.loads(report_lines[0])
        assert row["verdict"] in ("retained", "rejected")
        assert set(row) >= {"article", "verdict", "noisy", "total", "fraction",
                            "removed_sentences", "dropped_slots"}
        if row["verdict"] == "retained":
            cleaned = deserialize_article((clean_dir / "a.json").read_bytes())
            assert cleaned.paragraphs


class TestAgreement:
    def write_choices(self, path, matches, total):
        rows = [{"choice": "img_a", "truth": "img_a"}] * matches
        rows += [{"choice": "img_a", "truth": "img_b"}] * (total - matches)
        path.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")

    def test_all_match(self, tmp_path, capsys):
        choices = tmp_path / "choices.jsonl"
        self.write_choices(choices, 10, 10)
        assert main(["agreement", "--choices", str(choices)]) == 0
        assert capsys.readouterr().out.strip() == "100.0"

    def test_none_match(self, tmp_path, capsys):
        choices = tmp_path / "choices.jsonl"
        self.write_choices(choices, 0, 10)
        assert main(["agreement", "--choices", str(choices)]) == 0
        assert capsys.readouterr().out.strip() == "0.0"

    def test_402_of_1000(self, tmp_path, capsys):
        choices = tmp_path / "choices.jsonl"
        self.write_choices(choices, 402, 1000)
        assert main(["agreement", "--choices", str(choices)]) == 0
        assert capsys.readouterr().out.strip() == "40.2"


class TestConfigPrecedence:
    def test_unknown_config_key_rejected(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        (tmp_path / "xcompose.toml").write_text("mystery_knob = 3\n", encoding="utf-8")
        images = write_images_file(tmp_path / "images.txt", n=1)
        code = main(["ingest", "--images", str(images), "--index-dir", str(tmp_path / "i"), "--stub"])
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["code"] == "ConfigError"

    def test_file_supplies_defaults_env_overrides(self, tmp_path, monkeypatch):
        from xcompose.config import load_config

        config_file = tmp_path / "xcompose.toml"
        config_file.write_text('gen_url = "http://file.example"\ndim = 32\n', encoding="utf-8")
        config = load_config({}, config_path=str(config_file), env={})
        assert config.gen_url == "http://file.example" and config.dim == 32
        config = load_config({}, config_path=str(config_file),
                             env={"XC_GEN_URL": "http://env.example"})
        assert config.gen_url == "http://env.example"
        config = load_config({"gen_url": "http://flag.example"}, config_path=str(config_file),
                             env={"XC_GEN_URL": "http://env.example"})
        assert config.gen_url == "http://flag.example"
