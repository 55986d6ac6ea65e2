import hashlib
import subprocess
import sys

import pytest

from patchfinder.cli import EXIT_ERROR, EXIT_NO_MATCH, EXIT_OK, main
from patchfinder.imaging import crop, save_image, slice_image
from patchfinder.synth import write_corpus


@pytest.fixture(scope="module")
def indexed(tmp_path_factory, small_corpus):
    out = tmp_path_factory.mktemp("idx") / "lib.idx"
    assert main(["index", "--corpus", str(small_corpus), "--out", str(out)]) == EXIT_OK
    return out


def lines(capsys):
    return capsys.readouterr().out.strip().splitlines()


def test_index_three_images(tmp_path, capsys):
    write_corpus(tmp_path / "c", 3)
    assert main(["index", "--corpus", str(tmp_path / "c"), "--out", str(tmp_path / "a.idx")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "indexed 3 images" in out and "skipped 0 files" in out
    assert main(["index", "--corpus", str(tmp_path / "c"), "--out", str(tmp_path / "b.idx")]) == EXIT_OK
    digest = [hashlib.sha256((tmp_path / n).read_bytes()).hexdigest() for n in ("a.idx", "b.idx")]
    assert digest[0] == digest[1]


def test_index_missing_and_empty(tmp_path, capsys):
    assert main(["index", "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "x.idx")]) == EXIT_ERROR
    (tmp_path / "empty").mkdir()
    assert main(["index", "--corpus", str(tmp_path / "empty"), "--out", str(tmp_path / "x.idx")]) == EXIT_ERROR
    assert "empty corpus" in capsys.readouterr().err


def test_query_exact_quadrant(indexed, small_corpus, small_images, tmp_path, capsys):
    save_image(slice_image(small_images[8], "quad")[2], tmp_path / "q.png")
    rc = main(["query", "--index", str(indexed), "--corpus", str(small_corpus), "--patch", str(tmp_path / "q.png")])
    out = lines(capsys)
    assert rc == EXIT_OK
    header, first = out[0].split("\t"), out[1].split("\t")
    assert header[:6] == ["rank", "id", "path", "placement", "distance", "matched"]
    assert first[:6] == ["1", "8", "img_00008.png", "2", "0", "true"]
    assert len(out) == 1 + 5 + 1
    assert out[-1].startswith("verdict\tmatch\t8")


def test_query_zero_tolerance_no_match(indexed, small_corpus, small_images, tmp_path, capsys):
    save_image(crop(small_images[8], 4, 4, 64), tmp_path / "j.png")
    argv = ["query", "--index", str(indexed), "--corpus", str(small_corpus), "--patch", str(tmp_path / "j.png")]
    assert main(argv + ["--tolerance", "0"]) == EXIT_NO_MATCH
    out = lines(capsys)
    assert all(line.split("\t")[5] == "false" for line in out[1:-1])
    assert out[-1].startswith("verdict\tno-match")


@pytest.mark.parametrize("mode,count", [("quad", 4), ("grid16", 16)])
def test_query_placements_per_mode(indexed, small_corpus, small_images, tmp_path, capsys, mode, count):
    save_image(crop(small_images[1], 10, 10, 64), tmp_path / "p.png")
    main(["query", "--index", str(indexed), "--corpus", str(small_corpus), "--patch", str(tmp_path / "p.png"),
          "--mode", mode])
    for line in lines(capsys)[1:-1]:
        assert len(line.split("\t")[6].split(",")) == count


def test_query_errors(indexed, small_corpus, tmp_path, capsys):
    (tmp_path / "bad.png").write_bytes(b"nope")
    assert main(["query", "--index", str(indexed), "--patch", str(tmp_path / "bad.png")]) == EXIT_ERROR
    (tmp_path / "bad.idx").write_bytes(b"XXXX")
    assert main(["query", "--index", str(tmp_path / "bad.idx"), "--patch", str(tmp_path / "bad.png")]) == EXIT_ERROR


def test_bench_writes_tsv(small_corpus, tmp_path, capsys):
    out = tmp_path / "report.tsv"
    rc = main(["bench", "--corpus", str(small_corpus), "--queries", "4", "--crop-policy", "exact",
               "--tolerance", "100", "--out", str(out)])
    assert rc == EXIT_OK
    assert "published-reference" in capsys.readouterr().out
    rows = {line.split("\t")[0]: line.split("\t") for line in out.read_text().splitlines() if line}
    assert rows["cnn-quad"][4] == "100.0"


def test_calibrate(small_corpus, tmp_path, capsys):
    assert main(["calibrate", "--corpus", str(small_corpus), "--mode", "quad", "--crop-policy", "exact"]) == EXIT_OK
    out = lines(capsys)
    assert out[-1].startswith("recommend\tquad\t")
    assert float(out[-1].split("\t")[2]) > 0
    write_corpus(tmp_path / "tiny", 5)
    assert main(["calibrate", "--corpus", str(tmp_path / "tiny")]) == EXIT_ERROR


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "patchfinder", "synth", "--out", str(tmp_path / "s"), "--count", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert len(list((tmp_path / "s").iterdir())) == 2
