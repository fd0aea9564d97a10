import csv
import json

import numpy as np
import pytest

from parsmooth import bench, cli
from parsmooth.bench import BenchCsvError, BenchRecord, read_csv, summarize, write_csv
from parsmooth.ssm import make_random_lgssm, make_tracking_model


def read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture
def data_dir(tmp_path):
    assert cli.main(["simulate", "--n", "40", "--seed", "1", "--out", str(tmp_path)]) == 0
    return tmp_path


def test_record_invariants():
    with pytest.raises(ValueError):
        BenchRecord(8, "kf", 10, 11, 0, 1, 0)
    with pytest.raises(ValueError):
        BenchRecord(8, "ekf", 10, 10, 0, 1, 0)
    with pytest.raises(ValueError):
        BenchRecord(0, "kf", 10, 10, 0, 1, 0)


def test_csv_columns_exact(tmp_path):
    path = tmp_path / "b.csv"
    write_csv([BenchRecord(4, "kf", 10, 10, 5, 1, 0)], str(path))
    assert path.read_text().splitlines()[0] == "n,algorithm,work_flops,span_flops,wall_time_ns,block_l,seed"
    assert read_csv(str(path)) == [BenchRecord(4, "kf", 10, 10, 5, 1, 0)]


def test_malformed_csv_reports_line(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text(",".join(bench.CSV_COLUMNS) + "\n16,kf,10,10,1,1,0\n16,pkf,ten,5,1,1,0\n")
    with pytest.raises(BenchCsvError, match=r"b\.csv:3"):
        read_csv(str(path))
    path.write_text("n,algo\n")
    with pytest.raises(BenchCsvError, match=":1"):
        read_csv(str(path))


def test_summary_from_synthetic_records():
    recs = [
        BenchRecord(16, "kf", 100, 100, 0, 1, 0), BenchRecord(16, "pkf", 800, 150, 0, 1, 0),
        BenchRecord(32, "kf", 200, 200, 0, 1, 0), BenchRecord(32, "pkf", 1700, 180, 0, 1, 0),
        BenchRecord(64, "kf", 400, 400, 0, 1, 0), BenchRecord(64, "pkf", 3600, 210, 0, 1, 0),
        BenchRecord(16, "rts", 50, 50, 0, 1, 0), BenchRecord(16, "prts", 200, 60, 0, 1, 0),
    ]
    s = summarize(recs)
    assert s["filter"]["work_ratio"] == {"16": 8.0, "32": 8.5, "64": 9.0}
    assert s["filter"]["asymptotic_work_ratio"] == 9.0
    assert s["filter"]["crossover_n"] == 32
    assert s["filter"]["span_growth"] == {"16": 1.2, "32": 210 / 180}
    assert s["smoother"]["work_ratio"] == {"16": 4.0}
    assert s["smoother"]["crossover_n"] is None
    with pytest.raises(ValueError):
        summarize([])


def test_bench_flops_properties():
    recs = bench.run_bench(make_tracking_model(), [64, 256, 512], seeds=[0], blocks=[1])
    by = {(r.n, r.algorithm): r for r in recs}
    for n in (64, 256, 512):
        kf, pkf, rts, prts = (by[n, a] for a in ("kf", "pkf", "rts", "prts"))
        assert kf.span_flops == kf.work_flops and rts.span_flops == rts.work_flops
        assert pkf.span_flops < kf.work_flops
        assert prts.span_flops < rts.work_flops
    for n in (256, 512):
        assert 5 <= by[n, "pkf"].work_flops / by[n, "kf"].work_flops <= 12
        assert 2.5 <= by[n, "prts"].work_flops / by[n, "rts"].work_flops <= 6
    again = bench.run_bench(make_tracking_model(), [64, 256, 512], seeds=[0], blocks=[1])
    strip = lambda rs: [(r.n, r.algorithm, r.work_flops, r.span_flops) for r in rs]
    assert strip(recs) == strip(again)


def test_simulate_file(data_dir, tmp_path):
    doc = json.loads((data_dir / "data.json").read_text())
    assert set(doc) == {"model", "states", "measurements", "seed"}
    assert len(doc["measurements"]) == 40 and doc["seed"] == 1
    other = tmp_path / "again"
    cli.main(["simulate", "--n", "40", "--seed", "1", "--out", str(other)])
    assert (other / "data.json").read_bytes() == (data_dir / "data.json").read_bytes()


def test_simulate_default_hundred_rows(tmp_path):
    cli.main(["simulate", "--seed", "1", "--out", str(tmp_path)])
    assert len(json.loads((tmp_path / "data.json").read_text())["measurements"]) == 100


def test_simulate_rejects_zero_steps(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--n", "0", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert "--n" in capsys.readouterr().err


def test_simulate_unwritable_path(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    target = blocker / "sub"
    assert cli.main(["simulate", "--n", "5", "--out", str(target)]) == 1
    assert str(target) in capsys.readouterr().err


@pytest.mark.parametrize("seq,par", [("kf", "pkf"), ("rts", "prts")])
def test_run_sequential_vs_parallel(data_dir, seq, par):
    for alg in (seq, par):
        assert cli.main(["run", "--algorithm", alg, "--block", "4", "--out", str(data_dir)]) == 0
    h1, a = read_rows(data_dir / f"{seq}.csv")
    h2, b = read_rows(data_dir / f"{par}.csv")
    assert h1 == h2 and a.shape == (40, len(h1))
    assert ("loglik" in h1) == (seq == "kf")
    for ra, rb in zip(a, b):
        assert np.max(np.abs(ra - rb)) <= 1e-8 * max(np.max(np.abs(ra)), 1.0)


def test_run_single_step_filter_equals_smoother(tmp_path):
    cli.main(["simulate", "--n", "1", "--out", str(tmp_path)])
    cli.main(["run", "--algorithm", "pkf", "--out", str(tmp_path)])
    cli.main(["run", "--algorithm", "prts", "--out", str(tmp_path)])
    _, f = read_rows(tmp_path / "pkf.csv")
    _, s = read_rows(tmp_path / "prts.csv")
    assert f.shape[0] == 1
    np.testing.assert_allclose(f[:, :-1], s, rtol=1e-15)


def test_run_model_data_mismatch(data_dir, tmp_path, capsys):
    model_path = tmp_path / "model.json"
    model_path.write_text(json.dumps(make_random_lgssm(3, 1, 40, seed=0).to_dict()))
    with pytest.raises(SystemExit):
        cli.main(["run", "--algorithm", "kf", "--model", str(model_path), "--out", str(data_dir)])
    assert "mismatch" in capsys.readouterr().err


def test_bench_and_report(tmp_path):
    out = str(tmp_path)
    assert cli.main(["bench", "--n", "16,32,64", "--block", "1,2", "--out", out]) == 0
    recs = read_csv(str(tmp_path / "bench.csv"))
    assert {(r.algorithm, r.block_l) for r in recs} == {
        ("kf", 1), ("rts", 1), ("pkf", 1), ("pkf", 2), ("prts", 1), ("prts", 2)}
    assert cli.main(["report", "--out", out]) == 0
    for name in ("kf_flops.svg", "rts_flops.svg", "work_ratio.svg", "summary.json"):
        assert (tmp_path / name).stat().st_size > 0
    assert (tmp_path / "kf_flops.svg").read_text().lstrip().startswith("<?xml")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["filter"]["crossover_n"] is not None


def test_report_empty_sweep_writes_nothing(tmp_path):
    csv_path = tmp_path / "bench.csv"
    csv_path.write_text(",".join(bench.CSV_COLUMNS) + "\n")
    with pytest.raises(SystemExit):
        cli.main(["report", "--out", str(tmp_path)])
    assert sorted(p.name for p in tmp_path.iterdir()) == ["bench.csv"]


def test_bench_rejects_bad_lists(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["bench", "--n", "0,16", "--out", str(tmp_path)])
    with pytest.raises(SystemExit):
        cli.main(["bench", "--n", "a,b", "--out", str(tmp_path)])
