import csv
import io
import json

import jsonschema
import numpy as np
import pytest

from gridrisk.cli import main
from gridrisk.cyber import assess_cyber, default_cyber_graph
from gridrisk.mtd import rank_physical_targets
from gridrisk.report import (CURVE_COLUMNS, MTD_COLUMNS, UNPROTECTABLE, PipelineConfig, PipelineError,
                             RiskReport, combined_risk_index, mtd_csv, parse_sweep, report_schema)


@pytest.fixture(scope="module")
def cyber14(net14):
    return assess_cyber(net14, default_cyber_graph(net14))


def _report(cyber, profile, net, mix):
    return combined_risk_index(cyber, profile, mix, net)


class TestIndex:
    def test_mix_one_is_cyber_ranking(self, cyber14, profile14, net14):
        rep = _report(cyber14, profile14, net14, 1.0)
        costs = [b.cyber_cost for b in rep.buses]
        assert costs == sorted(costs)
        assert rep.ranking[0] == 8

    def test_mix_zero_is_exposure_ranking(self, cyber14, profile14, net14):
        rep = _report(cyber14, profile14, net14, 0.0)
        exposure = [b.exposure_score for b in rep.buses]
        assert exposure == sorted(exposure, reverse=True)
        phys = rank_physical_targets(profile14)
        assert {b for b, e in phys if e.min_rho is None} == {b.bus for b in rep.buses if b.unprotectable}
        assert all(b.exposure_score == 1.0 for b in rep.buses if b.unprotectable)

    def test_bus8_first(self, cyber14, profile14, net14):
        rep = _report(cyber14, profile14, net14, 0.5)
        top = rep.buses[0]
        assert top.bus == 8 and top.unprotectable and top.cyber_cost == 2

    @pytest.mark.parametrize("mix", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_bounds(self, cyber14, profile14, net14, mix):
        idx = [b.combined_index for b in _report(cyber14, profile14, net14, mix).buses]
        assert all(0 <= v <= 1 for v in idx)
        assert min(idx) == pytest.approx(0) or max(idx) == pytest.approx(1)

    def test_scaling_weights_keeps_ranking(self, net14, profile14, cyber14):
        scaled = assess_cyber(net14, default_cyber_graph(net14).scaled(7.5))
        assert _report(scaled, profile14, net14, 0.5).ranking == _report(cyber14, profile14, net14, 0.5).ranking

    def test_monotone_in_cost(self, cyber14, profile14, net14):
        rep = _report(cyber14, profile14, net14, 1.0)
        for a, b in zip(rep.buses, rep.buses[1:]):
            assert a.combined_index >= b.combined_index

    def test_mismatch(self, net14, profile14):
        from gridrisk.grid import three_bus
        net3 = three_bus()
        with pytest.raises(ValueError, match="mismatch"):
            combined_risk_index(assess_cyber(net3, default_cyber_graph(net3)), profile14)

    def test_bad_mix(self, cyber14, profile14):
        with pytest.raises(ValueError):
            combined_risk_index(cyber14, profile14, 1.5)

    def test_json_round_trip(self, cyber14, profile14, net14):
        rep = _report(cyber14, profile14, net14, 0.5)
        doc = json.loads(json.dumps(rep.to_dict()))
        jsonschema.validate(doc, report_schema())
        back = RiskReport.from_dict(doc)
        assert back.ranking == rep.ranking
        assert back.buses == rep.buses


class TestWriters:
    def test_mtd_csv(self, profile14, net14):
        rows = list(csv.DictReader(io.StringIO(mtd_csv(profile14, net14))))
        assert tuple(rows[0]) == MTD_COLUMNS
        assert len(rows) == 38
        bus8 = [r for r in rows if r["bus"] == "8"]
        assert bus8 and all(r["min_rho"] == UNPROTECTABLE for r in bus8)

    def test_sweep_parse(self):
        assert parse_sweep("0.01:0.01:0.50") == tuple(round(0.01 * k, 2) for k in range(1, 51))
        assert parse_sweep("0.1,0.3") == (0.1, 0.3)
        with pytest.raises(PipelineError):
            parse_sweep("a:b")

    def test_config_rejects_unknown(self):
        with pytest.raises(PipelineError) as err:
            PipelineConfig.from_dict({"colour": "red"})
        assert err.value.stage == "config"


class TestCli:
    def test_all_writes_artifacts(self, tmp_path):
        assert main(["all", "--out-dir", str(tmp_path), "--sweep", "0.05,0.1,0.2,0.5"]) == 0
        for name in ("rankings.csv", "mtd.csv", "mtd_curves.csv", "attacks.csv", "report.json"):
            assert (tmp_path / name).exists()
        doc = json.loads((tmp_path / "report.json").read_text())
        jsonschema.validate(doc, report_schema())
        assert doc["ranking"][0] == 8
        with open(tmp_path / "mtd_curves.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert tuple(rows[0]) == CURVE_COLUMNS
        assert len(rows) == 38 * 4

    def test_rtu_weight_three(self, tmp_path):
        out = tmp_path / "cyber.csv"
        assert main(["cyber", "--strategy", "rtu-only", "--rtu-weight", "3", "--out", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        for r in rows:
            rtus = r["rtus"].split(";")
            assert float(r["cost"]) == 3 * len(rtus)
            assert r["meters"] == ""

    def test_cyber_json(self, tmp_path):
        out = tmp_path / "cyber.json"
        assert main(["cyber", "--format", "json", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc[0]["bus"] == 8

    def test_missing_case(self, tmp_path, capsys):
        code = main(["all", "--case", str(tmp_path / "nope.m"), "--out-dir", str(tmp_path)])
        assert code != 0
        assert "parse_case" in capsys.readouterr().err

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"strategy": "meter-only", "rtu_weight": 5, "out_dir": str(tmp_path / "a")}))
        assert main(["cyber", "--config", str(cfg)]) == 0
        rows = list(csv.DictReader(open(tmp_path / "a" / "rankings.csv")))
        assert {r["strategy"] for r in rows} == {"meter-only"}
        assert main(["cyber", "--config", str(cfg), "--strategy", "rtu-only"]) == 0
        rows = list(csv.DictReader(open(tmp_path / "a" / "rankings.csv")))
        assert all(float(r["cost"]) % 5 == 0 for r in rows)

    def test_physical_single_target(self, tmp_path):
        out = tmp_path / "mtd.csv"
        assert main(["physical", "--target-bus", "8", "--target-branch", "7-8", "--out", str(out)]) == 0
        rows = list(csv.DictReader(open(out)))
        assert len(rows) == 1 and rows[0]["min_rho"] == UNPROTECTABLE

    def test_bad_target(self, tmp_path, capsys):
        assert main(["physical", "--target-bus", "8", "--target-branch", "1-2", "--out-dir", str(tmp_path)]) == 2
        assert "physical" in capsys.readouterr().err

    def test_combined_seed_is_echoed(self, tmp_path):
        out = tmp_path / "r.json"
        assert main(["combined", "--seed", "11", "--mix", "1", "--sweep", "0.5", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["seed"] == 11 and doc["mix"] == 1 and doc["config"]["sweep"] == "0.5"
