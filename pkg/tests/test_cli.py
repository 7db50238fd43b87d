import json
import time

import numpy as np
import pytest

from rso_puf import cli
from rso_puf.attacks import CrpDataset
from rso_puf.core import instance_from_text
from rso_puf.metrics import eer_search


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def instance_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("inst") / "puf64.txt"
    code = run(["gen", "--n", "64", "--seed", "3", "--p-intra-target", "0.05",
                "--out", str(path)])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def clean_instance_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("inst") / "puf64-clean.txt"
    assert run(["gen", "--n", "64", "--seed", "3", "--p-intra-target", "0",
                "--out", str(path)]) == 0
    return path


class TestGen:
    def test_reproducible_bit_identical(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for out in (a, b):
            assert run(["gen", "--n", "32", "--seed", "11",
                        "--p-intra-target", "0.05", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_round_trip_and_embedded_flip_rate(self, instance_file):
        text = instance_file.read_text()
        instance = instance_from_text(text)
        assert instance.n == 64 and instance.noise_sigma > 0
        fields = dict(
            line.split("=", 1) for line in text.strip().splitlines()
        )
        measured = float(fields["flip_rate_measured"])
        assert 0.045 <= measured <= 0.055

    def test_missing_out_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            run(["gen", "--n", "8"])
        assert info.value.code == cli.EXIT_USAGE


class TestCollect:
    def test_raw_header_and_reproducibility(self, instance_file, tmp_path):
        a, b = tmp_path / "a.crps", tmp_path / "b.crps"
        for out in (a, b):
            assert run(["collect", "--instance", str(instance_file),
                        "--count", "2000", "--seed", "5", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0] == "n=64 provenance=raw seed=5"
        ds = CrpDataset.from_file(a)
        assert len(ds) == 2000

    def test_rso_record_count_divisible_by_n(self, instance_file, tmp_path):
        out = tmp_path / "rso.crps"
        assert run(["collect", "--instance", str(instance_file), "--mode", "rso",
                    "--m", "8", "--count", "1000", "--seed", "6",
                    "--out", str(out)]) == 0
        ds = CrpDataset.from_file(out)
        assert ds.provenance == "rso"
        assert len(ds) % 64 == 0
        assert len(ds) >= 1000

    def test_million_raw_records_within_budget(self, instance_file, tmp_path):
        out = tmp_path / "big.crps"
        started = time.perf_counter()
        assert run(["collect", "--instance", str(instance_file),
                    "--count", "1000000", "--seed", "7", "--out", str(out)]) == 0
        elapsed = time.perf_counter() - started
        assert elapsed < 120.0
        assert CrpDataset.from_file(out).challenges.shape == (1000000, 64)

    def test_missing_instance_is_io_error(self, tmp_path):
        code = run(["collect", "--instance", str(tmp_path / "nope.txt"),
                    "--count", "10", "--out", str(tmp_path / "x.crps")])
        assert code == cli.EXIT_IO


class TestAttack:
    def test_lr_row_appended(self, instance_file, tmp_path):
        ds_path = tmp_path / "train.crps"
        assert run(["collect", "--instance", str(instance_file),
                    "--count", "4000", "--seed", "8", "--out", str(ds_path)]) == 0
        report_path = tmp_path / "report.csv"
        assert run(["attack", "--dataset", str(ds_path), "--method", "lr",
                    "--test-instance", str(instance_file),
                    "--test-count", "2000", "--out", str(report_path)]) == 0
        lines = report_path.read_text().strip().splitlines()
        assert lines[0].startswith("# config:")
        assert lines[1] == "method,n,m,train_size,accuracy,seconds"
        method, n, m, train_size, accuracy, _ = lines[2].split(",")
        assert method == "lr" and n == "64" and train_size == "2800"
        assert float(accuracy) >= 0.9

    def test_unknown_method_is_contract_error(self, instance_file, tmp_path):
        with pytest.raises(SystemExit) as info:
            run(["attack", "--dataset", "x", "--method", "svm", "--out", "y"])
        assert info.value.code == cli.EXIT_USAGE

    def test_tiny_dataset_rejected(self, tmp_path):
        ds = CrpDataset(
            n=4,
            challenges=np.zeros((4, 4), dtype=np.uint8),
            responses=np.zeros(4, dtype=np.uint8),
        )
        path = tmp_path / "tiny.crps"
        ds.to_file(path)
        code = run(["attack", "--dataset", str(path), "--method", "lr",
                    "--out", str(tmp_path / "r.csv")])
        assert code == cli.EXIT_CONTRACT


class TestAuthstats:
    def test_matches_metrics_module(self, tmp_path, capsys):
        csv_path = tmp_path / "table.csv"
        json_path = tmp_path / "row.json"
        assert run(["authstats", "--n", "64", "--p-inter", "0.498",
                    "--p-intra", "0.048", "--row", "2",
                    "--out", str(csv_path), "--out-json", str(json_path)]) == 0
        doc = json.loads(json_path.read_text())
        expected = eer_search(64, 0.498, 0.048)
        assert doc["n_eer"] == expected.n_eer == 13
        assert doc["far"] == expected.far
        rows = csv_path.read_text().strip().splitlines()
        assert rows[1] == "row,p_inter,p_intra,n,n_EER,FAR,FRR,EER"
        assert rows[2].startswith("2,0.498,0.048,64,13,")

    def test_zero_intra_gives_zero_frr(self, capsys):
        assert run(["authstats", "--n", "32", "--p-inter", "0.5",
                    "--p-intra", "0"]) == 0
        doc = json.loads(
            "\n".join(capsys.readouterr().out.split("\n}")[0].split("\n")) + "\n}"
        )
        assert doc["frr"] == 0.0


class TestProtocolCommand:
    def test_honest_campaign_zero_noise(self, clean_instance_file, tmp_path):
        out = tmp_path / "report.json"
        transcripts = tmp_path / "log.jsonl"
        assert run(["protocol", "--instance", str(clean_instance_file),
                    "--sessions", "100", "--m", "2", "--seed", "9",
                    "--n-tolerance", "13",
                    "--transcripts", str(transcripts), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["accepts"] == 100 and doc["rejects"] == 0
        assert doc["exposed_bits"] == 100 * 64
        # two threshold crossings of 2600 exposed bits in 6400
        assert doc["update_events"] == (100 * 64) // 2600 == 2
        assert len(transcripts.read_text().strip().splitlines()) == 100
        assert doc["config"]["seed"] == 9


class TestEnvOverride:
    def test_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RSO_PUF_SEED", "77")
        out_a = tmp_path / "a.txt"
        assert run(["gen", "--n", "16", "--p-intra-target", "0",
                    "--out", str(out_a)]) == 0
        monkeypatch.delenv("RSO_PUF_SEED")
        out_b = tmp_path / "b.txt"
        assert run(["gen", "--n", "16", "--seed", "77", "--p-intra-target", "0",
                    "--out", str(out_b)]) == 0
        assert out_a.read_bytes() == out_b.read_bytes()
