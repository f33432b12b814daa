import csv
import io

import pytest

from paperpuf.cli import main
from paperpuf.db import formats
from paperpuf.db.store import TemplateStore


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "paperpuf.toml"
    path.write_text("patch_size = 32\nthreshold = 0.3\n")
    return str(path)


def rows(text: str):
    return list(csv.DictReader(io.StringIO(text)))


def test_pipeline_from_sheet_to_decision(tmp_path, config, capsys):
    patch = str(tmp_path / "sheet.patch")
    assert main(["generate", "--config", config, "--seed", "4", "--out", patch]) == 0
    assert formats.load_patch(patch).shape == (32, 32)

    for name, seed in (("enroll", "1"), ("query", "2")):
        capture = str(tmp_path / f"{name}-capture")
        assert main(["render", patch, "--config", config, "--seed", seed, "--out", capture]) == 0
        assert main(["extract", capture, "--config", config, "--out", str(tmp_path / f"{name}.nmap")]) == 0

    store = str(tmp_path / "store")
    assert main(["enroll", str(tmp_path / "enroll.nmap"), "--store", store, "--id", "sheet-4", "--config", config]) == 0
    assert TemplateStore.open(store).ids() == ["sheet-4"]

    capsys.readouterr()
    assert main(["verify", str(tmp_path / "query.nmap"), "--store", store, "--id", "sheet-4"]) == 0
    (result,) = rows(capsys.readouterr().out)
    assert result["accepted"] == "true" and result["matched_id"] == "sheet-4"
    assert float(result["corr_x"]) > 0.5


def test_seed_is_announced(tmp_path, config, capsys):
    assert main(["generate", "--config", config, "--seed", "9", "--out", str(tmp_path / "a.patch")]) == 0
    assert "seed=9" in capsys.readouterr().err


def test_usage_errors_exit_with_one():
    with pytest.raises(SystemExit) as exit_info:
        main([])
    assert exit_info.value.code == 1
    with pytest.raises(SystemExit) as exit_info:
        main(["verify", "query.nmap", "--store", "s"])
    assert exit_info.value.code == 1


def test_domain_errors_exit_with_two(tmp_path, make_map, capsys):
    query = tmp_path / "q.nmap"
    formats.save_norm_map(query, make_map())
    TemplateStore.open(tmp_path / "store").enroll("a", make_map(seed=1))
    assert main(["verify", str(query), "--store", str(tmp_path / "store"), "--id", "missing"]) == 2
    assert "missing" in capsys.readouterr().err
    assert main(["generate", "--out", str(tmp_path / "x.patch"), "--config", str(tmp_path / "absent.toml")]) == 2


def test_invalid_config_values_are_domain_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("threshold = 2.0\n")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "x.patch")]) == 2


def test_collide_prints_mantissa_and_exponent(capsys):
    assert main(["collide", "--d", "40000", "--epsilon", "0.3"]) == 0
    (row,) = rows(capsys.readouterr().out)
    assert row["exponent"] == "-20916"
    assert float(row["mantissa"]) == pytest.approx(7.08, abs=0.01)
    assert float(row["log10_p"]) == pytest.approx(-20915.1498, abs=0.01)


def test_collide_with_monte_carlo(capsys):
    assert main(["report", "collide-mc", "--d", "2", "--epsilon", "0.5", "--samples", "100000", "--seed", "1"]) == 0
    (row,) = rows(capsys.readouterr().out)
    assert int(row["samples"]) == 100_000
    assert abs(float(row["estimate"]) - 0.25) < 5 * float(row["sigma"])


def test_codec_fit_and_digital_attack(tmp_path, make_map, capsys):
    paths = []
    for seed in range(8):
        path = tmp_path / f"h{seed}.nmap"
        formats.save_norm_map(path, make_map(seed=seed, size=8))
        paths.append(str(path))
    codec_x, codec_y = str(tmp_path / "x.lpc"), str(tmp_path / "y.lpc")
    assert main(["codec", "fit", *paths, "--out", codec_x]) == 0
    assert main(["codec", "fit", *paths, "--component", "y", "--out", codec_y]) == 0
    assert formats.load_codec(codec_x).m >= 1

    store = tmp_path / "store"
    TemplateStore.open(store).enroll("target", formats.load_norm_map(paths[3]))
    capsys.readouterr()
    trace = tmp_path / "trace.csv"
    code = main([
        "attack", "digital", "--method", "powell", "--target-id", "target", "--codec", codec_x,
        "--companion-codec", codec_y, "--store", str(store), "--budget", "500", "--trace", str(trace),
    ])
    assert code == 0
    (row,) = rows(capsys.readouterr().out)
    assert row["method"] == "powell" and row["component"] == "x"
    assert len(trace.read_text().splitlines()) == int(row["function_evals"]) + 1


def test_reruns_with_one_seed_write_identical_bytes(tmp_path, config, make_map):
    def run_all(root):
        root.mkdir()
        patch = root / "sheet.patch"
        assert main(["generate", "--config", config, "--seed", "4", "--out", str(patch)]) == 0
        assert main(["render", str(patch), "--config", config, "--seed", "5", "--out", str(root / "capture")]) == 0
        assert main(["extract", str(root / "capture"), "--config", config, "--out", str(root / "query.nmap")]) == 0
        assert main([
            "attack", "phys", "--kind", "scratch", "--strength", "0.1", "0.5", "--trials", "2",
            "--patch", str(patch), "--config", config, "--seed", "6", "--out", str(root / "sweep.csv"),
        ]) == 0
        assert main(["report", "hist", "--pairs", "3", "--config", config, "--seed", "2", "--out", str(root / "hist.csv")]) == 0
        holdout = []
        for seed in range(6):
            path = root / f"h{seed}.nmap"
            formats.save_norm_map(path, make_map(seed=seed, size=8))
            holdout.append(str(path))
        assert main(["codec", "fit", *holdout, "--out", str(root / "x.lpc")]) == 0
        assert main(["codec", "fit", *holdout, "--component", "y", "--out", str(root / "y.lpc")]) == 0
        store = root / "store"
        TemplateStore.open(store).enroll("target", formats.load_norm_map(holdout[2]))
        assert main([
            "attack", "digital", "--method", "powell", "--target-id", "target", "--codec", str(root / "x.lpc"),
            "--companion-codec", str(root / "y.lpc"), "--store", str(store), "--budget", "200", "--seed", "1",
            "--trace", str(root / "trace.csv"), "--out", str(root / "attack.csv"),
        ]) == 0
        return {
            path.relative_to(root): path.read_bytes()
            for path in sorted(root.rglob("*"))
            if path.is_file() and store not in path.parents
        }

    first = run_all(tmp_path / "first")
    second = run_all(tmp_path / "second")
    assert first.keys() == second.keys()
    assert "sheet.patch.json" in {str(name) for name in first}
    for name in first:
        assert first[name] == second[name], name
