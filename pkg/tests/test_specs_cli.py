import csv
import json
from pathlib import Path

import numpy as np
import pytest

from qbclab.channels import CompoundSet, CqChannel, broadcast, bit_flip_cq, constant_cq, depolarizing_cq, noiseless_cq
from qbclab.cli import csv_text, main
from qbclab.linalg import random_state
from qbclab.specs import (
    SpecError,
    canonical_dumps,
    channel_to_dict,
    compound_from_obj,
    dump_compound,
    load_compound,
    load_input,
    parse_specs,
)

SAMPLES = Path(__file__).resolve().parent.parent / "sample_specs"


def three_member():
    rng = np.random.default_rng(0)
    odd = CqChannel(np.array([random_state(2, rng) for _ in range(2)]))
    return CompoundSet((broadcast(noiseless_cq(2), constant_cq(np.eye(2) / 2, 2)),
                        broadcast(odd, bit_flip_cq(0.3)),
                        broadcast(depolarizing_cq(0.1), noiseless_cq(2, [1, 0]))))


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSpecs:
    def test_round_trip_bytes(self, tmp_path):
        text = dump_compound(three_member())
        path = tmp_path / "c.json"
        path.write_text(text)
        back = load_compound(path)
        assert dump_compound(back) == text
        for a, b in zip(three_member(), back):
            assert np.array_equal(a.outputs, b.outputs)

    def test_canonical(self):
        assert canonical_dumps({"b": 1, "a": [0.1, 2]}) == '{"a":[0.1,2],"b":1}\n'

    def test_trace_violation_names_entry(self, tmp_path):
        obj = [channel_to_dict(noiseless_cq(2)), channel_to_dict(noiseless_cq(2))]
        obj[1]["outputs"][0][0][0] = [0.9, 0.0]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(obj))
        with pytest.raises(SpecError) as info:
            load_compound(path)
        msg = str(info.value)
        assert "trace" in msg and "members[1].outputs[0]" in msg

    def test_malformed_json_position(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('[\n  {"alphabet": 2,\n   "dims": [2 2]}\n]')
        with pytest.raises(SpecError, match=rf"{path}:3:\d+"):
            load_compound(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SpecError, match="cannot read"):
            load_compound(tmp_path / "absent.json")

    def test_missing_fields(self):
        with pytest.raises(SpecError, match="missing"):
            compound_from_obj([{"alphabet": 2}])

    def test_dimension_mismatch(self):
        obj = channel_to_dict(noiseless_cq(2))
        obj["dims"] = [3]
        with pytest.raises(SpecError, match="dimension"):
            compound_from_obj([obj])

    def test_net_provenance(self):
        obj = {"members": [channel_to_dict(noiseless_cq(2))], "net": {"tau": 0.1, "seed": 3}}
        c = compound_from_obj(obj)
        assert c.provenance["kind"] == "net" and c.provenance["tau"] == 0.1
        assert json.loads(dump_compound(c))["net"] == {"seed": 3, "tau": 0.1}

    def test_sample_specs_load(self):
        for p in SAMPLES.glob("*.json"):
            if p.name == "uniform_bit.json":
                assert load_input(p).q.tolist() == [1.0]
            else:
                assert len(load_compound(p)) >= 1
        c, inp = parse_specs(SAMPLES / "relabeled_pair.json", SAMPLES / "uniform_bit.json")
        assert len(c) == 2 and inp.l == 1

    def test_bad_input(self, tmp_path):
        path = tmp_path / "inp.json"
        path.write_text(json.dumps({"q": [0.5, 0.6], "r": [[1, 0], [0, 1]], "t": [[1, 0], [0, 1]]}))
        with pytest.raises(SpecError):
            load_input(path)


class TestCsv:
    def test_round_trip_17_digits(self):
        rng = np.random.default_rng(1)
        vals = list(rng.random(50)) + [1 / 3, np.pi, 1e-300, 0.1]
        text = csv_text(["v"], [[v] for v in vals])
        back = [float(row.split(",")[0]) for row in text.splitlines()[1:]]
        assert back == [float(v) for v in vals]

    def test_bools_and_ints(self):
        assert csv_text(["a", "b"], [[True, np.int64(3)]]) == "a,b\n1,3\n"


def run(tmp_path, name, *argv):
    out = tmp_path / name
    status = main([*argv, "--out", str(out)])
    return status, out


class TestCli:
    def test_region_bcc(self, tmp_path):
        status, out = run(tmp_path, "r", "region-bcc", "--channels", str(SAMPLES / "eve_constant.json"),
                          "--restarts", "1", "--iterations", "20")
        assert status == 0
        rows = read_rows(out / "region.csv")
        assert rows[0] == ["weight", "r0", "r_c", "attaining", "slack"]
        assert len(rows) == 1 + 5
        report = json.loads((out / "report.json").read_text())
        assert report["command"] == "region-bcc" and report["partial"] is False
        assert {"qbclab", "numpy", "scipy", "python"} <= set(report["versions"])
        assert report["caps"]["dim_cap"] == 4096 and report["seed"] == 0
        assert report["wall_clock_seconds"] >= 0

    def test_region_tpc_fixed_input(self, tmp_path):
        status, out = run(tmp_path, "t", "region-tpc", "--channels", str(SAMPLES / "eve_constant.json"),
                          "--input-dist", str(SAMPLES / "uniform_bit.json"))
        assert status == 0
        rows = read_rows(out / "region.csv")
        assert rows[0][1] == "r1" and len(rows) == 2
        assert float(rows[1][2]) == pytest.approx(1.0)

    def test_simulate_deterministic(self, tmp_path):
        argv = ("simulate", "--channels", str(SAMPLES / "relabeled_pair.json"), "--input-dist",
                str(SAMPLES / "uniform_bit.json"), "--n-grid", "4", "--seeds", "0-2", "--layout", "1,4,1",
                "--seed", "7")
        s1, a = run(tmp_path, "a", *argv)
        s2, b = run(tmp_path, "b", *argv)
        assert s1 == s2 == 0
        assert (a / "rows.csv").read_bytes() == (b / "rows.csv").read_bytes()
        rows = read_rows(a / "rows.csv")
        assert rows[0] == ["n", "seed", "member", "e_B", "e_E", "leakage"]
        assert len(rows) == 1 + 3 * 2

    def test_net(self, tmp_path):
        status, out = run(tmp_path, "n", "net", "--tau", "0.2", "--samples", "500", "--budget", "256")
        assert status == 0
        rows = read_rows(out / "net.csv")
        assert rows[1][0] == "radius" and rows[1][5] == "1"
        net = load_compound(out / "net.json")
        assert net.provenance["kind"] == "net"
        assert len(net) == int(rows[1][2])

    def test_covering(self, tmp_path):
        status, out = run(tmp_path, "c", "covering", "--L", "10,100", "--trials", "200")
        assert status == 0
        rows = read_rows(out / "covering.csv")
        assert [r[0] for r in rows[1:]] == ["10", "100"]
        report = json.loads((out / "report.json").read_text())
        assert report["result"]["all_passed"] is True

    def test_spec_error_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        status, out = run(tmp_path, "e", "region-bcc", "--channels", str(bad))
        assert status == 2
        report = json.loads((out / "report.json").read_text())
        assert report["partial"] is True and f"{bad}:1:2" in report["error"]

    def test_runtime_error_exit_1(self, tmp_path):
        status, out = run(tmp_path, "f", "simulate", "--channels", str(SAMPLES / "eve_constant.json"),
                          "--input-dist", str(SAMPLES / "uniform_bit.json"), "--n-grid", "2,13",
                          "--seeds", "0", "--layout", "1,1,1")
        assert status == 1
        report = json.loads((out / "report.json").read_text())
        assert report["partial"] is True and "exceeds cap" in report["error"]
        assert len(read_rows(out / "rows.csv")) == 2

    def test_seed_range(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["covering", "--out", str(tmp_path), "--seed", "-1"])
