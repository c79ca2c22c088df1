import csv
import io

import numpy as np
import pytest

from tsr import synthetic as syn
from tsr.cli import main
from tsr.shapeio import write_pgm


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("gal")
    for s in syn.synthetic_gallery(n_classes=3, per_class=12, seed=1, size=120):
        write_pgm(d / f"{s.id}.pgm", s.grid)
    return d


@pytest.fixture(scope="module")
def built(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("idx") / "g.idx"
    assert main(["build", "--dataset", str(dataset), "--out", str(out), "--M", "3",
                 "--trees", "20", "--knn-w", "8"]) == 0
    return out


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_query_by_id_and_path(built, dataset, capsys):
    assert main(["query", str(built), "anchor-1", "--top", "5", "--header", "--mode", "tsr"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["rank", "id", "score", "cluster", "J", "included"]
    assert rows[1][1] == "anchor-1" and len(rows) == 6
    assert main(["query", str(built), str(dataset / "anchor-1.pgm"), "--mode", "local-only"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0][1] == "anchor-1" and float(rows[0][2]) == 0.0


def test_benchmark_outputs(built, tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["benchmark", str(built), "--mode", "tsr", "--out", str(out), "--figures"]) == 0
    text = capsys.readouterr().out
    assert "bulls_eye" in text
    for name in ("report.txt", "topn.csv", "pr.csv", "bullseye.csv", "pr.png", "topn.png"):
        assert (out / name).stat().st_size > 0
    assert (out / "pr.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert main(["benchmark", str(built), "--metric", "topn"]) == 0
    assert capsys.readouterr().out.startswith("N,count")


def test_dumps(built, tmp_path, capsys):
    assert main(["dump-features", str(built)]) == 0
    rows = _rows(capsys.readouterr().out)
    assert len(rows) == 37 and len(rows[0]) == 14
    assert main(["dump-clusters", str(built)]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0] == ["id", "label", "cluster", "medoid", "training"]
    assert sum(int(r[3]) for r in rows[1:]) == 3
    assert main(["dump-distances", str(built)]) == 0
    D = np.array([[float(v) for v in r[1:]] for r in _rows(capsys.readouterr().out)[1:]])
    assert D.shape == (36, 36) and np.allclose(D, D.T)
    fig = tmp_path / "s.png"
    assert main(["dump-scatter", str(built), "anchor-2", "--figure", str(fig)]) == 0
    rows = _rows(capsys.readouterr().out)
    assert rows[0][0] == "cluster" and len(rows) == 4 and fig.exists()


def test_exit_codes(built, tmp_path, capsys):
    assert main(["build"]) == 1
    assert main(["query", str(built), "x", "--mode", "bogus"]) == 1
    assert main(["query", str(tmp_path / "missing.idx"), "anchor-1"]) == 2
    (tmp_path / "junk.idx").write_bytes(b"not an index")
    assert main(["query", str(tmp_path / "junk.idx"), "anchor-1"]) == 2
    assert main(["build", "--dataset", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 2
    capsys.readouterr()


def test_convert(tmp_path):
    from PIL import Image

    g = np.full((12, 12), 255, np.uint8)
    g[3:9, 3:9] = 0
    Image.fromarray(g).save(tmp_path / "a-1.gif")
    assert main(["convert", str(tmp_path / "a-1.gif"), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "a-1.pgm").exists()
