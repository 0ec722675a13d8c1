import csv
import io
import json

import numpy as np
import pytest

from overdraft.bench import (BENCH_CSV_FIELDS, BenchConfig, generate_random_network, run_benchmark,
                             write_bench_csv)
from overdraft.cli import main
from overdraft.errors import ValidationError
from overdraft.model import dumps_network, load_network
from overdraft.settlement import Ledger


class TestGenerator:
    def test_single_node(self):
        view = generate_random_network(1)
        assert view.num_nodes == 1 and view.num_edges == 0 and view.reputation("0") == 0.2

    def test_degree_clipped_at_n_minus_one(self):
        view = generate_random_network(10)
        for i in range(10):
            lenders = view.lenders[view.incoming(i)]
            assert sorted(lenders) == [j for j in range(10) if j != i]

    def test_structure(self):
        cfg = BenchConfig(seed=5)
        view = generate_random_network(2000, cfg)
        assert view.num_edges == 2000 * 9
        assert np.all(np.bincount(view.borrowers, minlength=2000) == 9)
        assert not np.any(view.lenders == view.borrowers)
        pairs = view.lenders.astype(np.int64) * 2000 + view.borrowers
        assert len(np.unique(pairs)) == len(pairs)
        assert set(np.unique(view.amounts)) <= {0, 10, 20}
        assert view.reputations.min() >= 0 and view.reputations.max() <= 1
        assert view.reputation("0") == 0.2

    def test_deterministic(self):
        cfg = BenchConfig(seed=9)
        assert dumps_network(generate_random_network(10**4, cfg)) == \
            dumps_network(generate_random_network(10**4, cfg))
        assert dumps_network(generate_random_network(50, cfg)) != \
            dumps_network(generate_random_network(50, BenchConfig(seed=10)))

    def test_invalid(self):
        with pytest.raises(ValidationError):
            generate_random_network(0)


class TestConfig:
    def test_defaults(self):
        cfg = BenchConfig()
        assert cfg.node_counts[-1] == 10**6 and cfg.iteration_counts == [100, 1000, 10**4, 10**5]
        assert (cfg.out_degree, cfg.max_distance, cfg.decay) == (9, 9, 0.95)

    def test_from_text(self):
        cfg = BenchConfig.from_text("# sweep\nnode_counts = 10, 1e3\ndecay=0.9\noptimized=false\nseed=0x10\n")
        assert cfg.node_counts == [10, 1000] and cfg.decay == 0.9
        assert cfg.optimized is False and cfg.seed == 16

    @pytest.mark.parametrize("text", ["colour=red\n", "decay=high\n", "decay=2\n", "node_counts=0\n",
                                      "just words\n"])
    def test_rejects(self, text):
        with pytest.raises(ValidationError):
            BenchConfig.from_text(text)


class TestBenchmark:
    cfg = BenchConfig(node_counts=[10, 30], iteration_counts=[50, 200], seed=1)

    def test_rows_and_csv(self):
        rows = run_benchmark(self.cfg)
        assert [(r.nodes, r.iterations, r.optimized) for r in rows] == [
            (n, k, o) for n in (10, 30) for k in (50, 200) for o in (True, False)]
        buf = io.StringIO()
        write_bench_csv(rows, buf)
        parsed = list(csv.reader(io.StringIO(buf.getvalue())))
        assert parsed[0] == BENCH_CSV_FIELDS and len(parsed) == 9

    def test_statistics_are_deterministic(self):
        a = [(r.mean, r.ci95_width) for r in run_benchmark(self.cfg)]
        b = [(r.mean, r.ci95_width) for r in run_benchmark(self.cfg, repeats=2)]
        assert a == b

    def test_budget_marks_rows_skipped(self):
        cfg = BenchConfig(node_counts=[200_000], iteration_counts=[5000], seed=1)
        rows = run_benchmark(cfg, both=False, budget_ms=0.0)
        assert rows[0].skipped
        buf = io.StringIO()
        write_bench_csv(rows, buf)
        assert buf.getvalue().splitlines()[1].endswith("skipped,skipped")


class TestCli:
    def test_gen_estimate(self, tmp_path, capsys):
        net, hist = tmp_path / "g.txt", tmp_path / "h.csv"
        assert main(["gen-graph", "--nodes", "12", "--seed", "4", "--out", str(net)]) == 0
        assert load_network(net).num_nodes == 12
        assert main(["estimate", "--network", str(net), "--iterations", "500",
                     "--threshold", "50", "--out", str(hist)]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["iterations"] == 500 and summary["decision"] in ("accept", "deny")
        rows = list(csv.reader(hist.open()))
        assert rows[0] == ["amount", "count"] and sum(int(c) for _, c in rows[1:]) == 500

    def test_ledger_commands(self, tmp_path, capsys):
        net, events, reps = tmp_path / "l.txt", tmp_path / "ev.jsonl", tmp_path / "rep.csv"
        net.write_text("overdraft-net v1 as_of=0\nN a 0.5\nN p 0.2\nN q 0.2\nL 0 a p 40 0 100 0 0\n")
        assert main(["settle", "--ledger", str(net), "--payer", "p", "--payee", "q",
                     "--amount", "30", "--events", str(events), "--reputation-csv", str(reps)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["lender_contributions"] == [["a", 30]]
        assert Ledger.load(net).account("q").balance == 30
        assert list(csv.reader(reps.open()))[0] == ["node", "block", "reputation"]
        assert main(["advance", "--ledger", str(net), "--blocks", "2", "--mint", "p=30",
                     "--events", str(events)]) == 0
        ledger = Ledger.load(net)
        assert ledger.height == 2 and ledger.account("a").balance == 30
        kinds = [json.loads(line)["kind"] for line in events.read_text().splitlines()]
        assert "settled" in kinds and "obligation_repaid" in kinds

    def test_interest(self, capsys):
        assert main(["interest", "--blocks", "53"]) == 0
        out = capsys.readouterr().out
        assert "I = 52.882262" in out and "schedule = 53 x 1" in out

    def test_attack(self, tmp_path):
        out = tmp_path / "a.csv"
        assert main(["attack", "--K", "2", "--R", "0.5", "--epsilon", "0.3", "--iterations", "100",
                     "--out", str(out)]) == 0
        rows = list(csv.DictReader(out.open()))
        assert {r["kind"]: r["verdict"] for r in rows} == {
            "reputation_split": "unprofitable", "coin_split": "blocked", "loan_split": "unprofitable"}

    def test_bench_exit_codes(self, tmp_path):
        out = tmp_path / "b.csv"
        assert main(["bench", "--nodes", "10", "--iterations", "100", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 3
        assert main(["bench", "--nodes", "100000", "--iterations", "5000", "--single",
                     "--budget-ms", "0", "--out", str(out)]) == 3

    def test_config_file(self, tmp_path):
        cfg, out = tmp_path / "c.txt", tmp_path / "b.csv"
        cfg.write_text("node_counts=10\niteration_counts=100,200\n")
        assert main(["bench", "--config", str(cfg), "--single", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 3

    @pytest.mark.parametrize("argv", [
        ["gen-graph", "--nodes", "0"],
        ["estimate", "--network", "/nonexistent"],
        ["interest", "--beta", "2"],
        ["attack", "--K", "3", "--X", "100"],
        ["bench", "--config", "/nonexistent"],
    ])
    def test_invalid_input_exits_2(self, argv, capsys):
        assert main(argv) == 2
        assert capsys.readouterr().err
