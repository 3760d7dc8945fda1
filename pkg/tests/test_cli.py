import csv
import hashlib
import json

import pytest

from conftest import FIXTURE_BETA
from vbspower import mlp
from vbspower.cli import EXIT_DATA, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, main, parse_seeds
from vbspower.core import ModelFile, ModelKind, load_model, save_model
from vbspower.registry import Registry
from vbspower.regression import CustomRegParams


def run(reg, *args):
    return main(["--registry", str(reg), *map(str, args)])


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def reg(tmp_path):
    return tmp_path / "reg"


def test_parse_seeds():
    assert parse_seeds("1..4") == [1, 2, 3, 4]
    assert parse_seeds("1,3..4,9") == [1, 3, 4, 9]


def test_generate_paper_campaign(reg):
    assert run(reg, "generate", "--platform", "NUC1", "--campaign", "paper", "--seed", 7) == EXIT_OK
    d, c = reg / "datasets/NUC1_default_s7.csv", reg / "datasets/NUC1_custom_s7.csv"
    assert len(rows(d)) == 598 and len(rows(c)) == 4955
    first = (sha(d), sha(c))
    assert run(reg, "generate", "--platform", "NUC1", "--campaign", "paper", "--seed", 7) == EXIT_OK
    assert (sha(d), sha(c)) == first


def test_generate_usage_errors(reg, capsys):
    assert run(reg, "generate", "--platform", "NUC1", "--n", 0) == EXIT_USAGE
    assert run(reg, "generate", "--platform", "Nope", "--n", 5) == EXIT_USAGE
    assert run(reg, "frobnicate") == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_generate_from_config_file(reg, tmp_path):
    from vbspower.datagen import GenConfig, get_profile

    cfg = GenConfig(get_profile("NUC2"), "custom", 40, seed=3)
    f = tmp_path / "gen.json"
    f.write_text(cfg.to_json())
    assert run(reg, "generate", "--gen-config", f) == EXIT_OK
    assert len(rows(reg / "datasets/NUC2_custom_s3.csv")) == 40


def test_fit_and_train(reg, capsys):
    run(reg, "generate", "--platform", "Server2", "--scheduler", "default", "--n", 107, "--seed", 1)
    ds = reg / "datasets/Server2_default_s1.csv"
    assert run(reg, "fit", "--dataset", ds, "--model-kind", "default_reg", "--scenario", "A") == EXIT_OK
    assert "train_rmse=" in capsys.readouterr().out
    model = load_model(reg / "models/Server2_default_reg_A_s0.json")
    assert model.model_kind is ModelKind.DEFAULT_REG

    assert run(reg, "train", "--dataset", ds, "--epochs", 220, "--batch", 32, "--lr", 0.001, "--scenario", "A") == EXIT_OK
    nn = load_model(reg / "models/Server2_mlp_A_s0.json")
    tc = nn.payload.train_config
    assert (tc.epochs, tc.batch_size, tc.learning_rate) == (220, 32, 0.001)

    assert run(reg, "fit", "--dataset", ds, "--model-kind", "unknown") == EXIT_USAGE
    assert run(reg, "fit", "--dataset", reg / "missing.csv", "--model-kind", "default_reg") == EXIT_DATA


def test_fine_tune_via_init_model(reg):
    run(reg, "generate", "--platform", "Server2", "--campaign", "paper", "--seed", 2)
    d, c = reg / "datasets/Server2_default_s2.csv", reg / "datasets/Server2_custom_s2.csv"
    run(reg, "train", "--dataset", d, "--epochs", 3, "--scenario", "B")
    src = reg / "models/Server2_mlp_B_s0.json"
    assert run(reg, "train", "--dataset", c, "--epochs", 3, "--init-model", src, "--scenario", "D") == EXIT_OK
    tuned = load_model(reg / "models/Server2_mlp_D_s0.json").payload
    assert (tuned.norm_mean == load_model(src).payload.norm_mean).all()


def test_ingest_bad_row_is_data_error(reg, tmp_path, capsys):
    f = tmp_path / "bad.csv"
    f.write_text("airtime,snr_db,mcs,power_w,scheduler,platform\n0.5,10.0,29,22.0,custom,Server1\n")
    assert run(reg, "ingest", f) == EXIT_DATA
    assert "line 2" in capsys.readouterr().err


def test_eval_row_accounting_and_plot_data(reg):
    assert run(reg, "eval", "--scenario", "A", "--platform", "Server1", "--seeds", "1..10", "--epochs", 5) == EXIT_OK
    report = rows(reg / "reports/A_Server1_report.csv")
    assert len(report) == 10 * 2
    for r in report:
        if r["model_kind"] == "mlp":
            scatter = rows(reg / f"reports/A_Server1_s{r['seed']}_scatter.csv")
            assert len(scatter) == int(r["n_test"])
    bars = rows(reg / "reports/A_Server1_rmse_bars.csv")
    assert {b["model_kind"] for b in bars} == {"default_reg", "mlp"}


def test_eval_b_and_c_share_fingerprint(reg):
    for sc in ("B", "C"):
        assert run(reg, "eval", "--scenario", sc, "--platform", "Server2", "--seeds", 3, "--models", "regression") == EXIT_OK
    fps = {
        sc: json.loads((reg / f"reports/{sc}_Server2_report.json").read_text())["reports"][0]["test_fingerprint"]
        for sc in ("B", "C")
    }
    assert fps["B"] == fps["C"] and len(fps["B"]) == 64


def test_eval_workers_match_sequential(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    common = ["eval", "--scenario", "A", "--platform", "Server2", "--seeds", "1..3", "--epochs", 2]
    assert run(a, *common) == EXIT_OK
    assert run(b, *common, "--workers", 3) == EXIT_OK
    assert (a / "reports/A_Server2_report.csv").read_bytes() == (b / "reports/A_Server2_report.csv").read_bytes()


def test_eval_usage_and_data_errors(reg, tmp_path):
    assert run(reg, "eval", "--scenario", "Z", "--platform", "NUC1") == EXIT_USAGE
    assert run(reg, "eval", "--scenario", "A", "--platform", "NUC1", "--models", "svm") == EXIT_USAGE
    missing = ["--default-csv", tmp_path / "x.csv", "--custom-csv", tmp_path / "y.csv"]
    assert run(reg, "eval", "--scenario", "A", "--platform", "Lab", *missing) == EXIT_DATA


def test_predict(reg, tmp_path, capsys):
    custom = tmp_path / "custom.json"
    save_model(ModelFile(ModelKind.CUSTOM_REG, CustomRegParams(FIXTURE_BETA), "Server2", "C", 0, "t"), custom)
    assert run(reg, "predict", "--model", custom, "--airtime", 0.5, "--snr", 20, "--mcs", 10) == EXIT_OK
    assert capsys.readouterr().out.strip() == "22.9500"
    assert run(reg, "predict", "--model", custom, "--airtime", 0.5, "--snr", 3, "--mcs", 10) == EXIT_INFEASIBLE

    zero = tmp_path / "zero.json"
    save_model(ModelFile(ModelKind.MLP, mlp.zero_model(), "P", "A", 0, "t"), zero)
    capsys.readouterr()
    assert run(reg, "predict", "--model", zero, "--airtime", 0.5, "--snr", 12, "--mcs", 7) == EXIT_OK
    assert capsys.readouterr().out.strip() == "0.0000"
    assert run(reg, "predict", "--model", zero, "--airtime", 1.5, "--snr", 12, "--mcs", 7) == EXIT_USAGE
    assert run(reg, "predict", "--model", tmp_path / "none.json", "--airtime", 0.5, "--snr", 1, "--mcs", 1) == EXIT_DATA


def test_registry_incremental_equals_rebuild(reg):
    run(reg, "generate", "--platform", "Server2", "--campaign", "paper", "--seed", 1)
    run(reg, "fit", "--dataset", reg / "datasets/Server2_custom_s1.csv", "--model-kind", "custom_reg", "--scenario", "C")
    run(reg, "eval", "--scenario", "A", "--platform", "Server2", "--seeds", 1, "--models", "regression")
    incremental = Registry(reg).read_index()
    assert run(reg, "registry", "rebuild") == EXIT_OK
    assert Registry(reg).read_index() == incremental
    kinds = {e["kind"] for e in incremental}
    assert {"dataset_default", "dataset_custom", "custom_reg", "default_reg", "report"} <= kinds


def test_registry_env_and_config(tmp_path, monkeypatch):
    root = tmp_path / "envreg"
    monkeypatch.setenv("VBSPOWER_REGISTRY", str(root))
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"generate": {"platform": "Server1", "seed": 4, "scheduler": "default", "n": 20}}))
    assert main(["--config", str(conf), "generate"]) == EXIT_OK
    assert len(rows(root / "datasets/Server1_default_s4.csv")) == 20
