import json
import os

import numpy as np
import pytest

from sparsehawkes.experiments import (
    ConfigError,
    diagnose,
    generate_truth,
    load_config,
    parse_config,
    rate_study,
    write_csv,
)
from sparsehawkes.model import mass_matrix, spectral_radius


def _base_raw(**over):
    raw = {
        "kind": "rate-study",
        "truth": {"K": 2, "s0": 1, "mass_range": [0.4, 0.5], "shape": "flat"},
        "T_grid": [50.0, 100.0],
        "replicates": 1,
        "seed": 7,
        "mcmc": {"iterations": 600, "burn_in": 200, "thinning": 5},
        "threshold": {"policy": "fixed", "value": 0.2},
        "prior": {"size_cap": 2},
        "loss_draws": 8,
    }
    raw.update(over)
    return raw


class TestConfigParsing:
    def test_roundtrip_defaults(self):
        cfg = parse_config(_base_raw())
        assert cfg.kind == "rate-study"
        assert cfg.T_grid == (50.0, 100.0)
        assert cfg.simulator == "cluster"
        assert cfg.prior["size_variant"] == "poisson"
        assert cfg.mcmc["nu_scale"] == 0.3

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            parse_config(_base_raw(bogus=1))

    def test_unknown_nested_key(self):
        raw = _base_raw()
        raw["truth"]["typo_key"] = 3
        with pytest.raises(ConfigError, match="unknown"):
            parse_config(raw)

    def test_missing_required_key(self):
        raw = _base_raw()
        del raw["seed"]
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_bad_T_grid(self):
        with pytest.raises(ConfigError, match="increasing"):
            parse_config(_base_raw(T_grid=[100.0, 50.0]))

    def test_bad_replicates(self):
        with pytest.raises(ConfigError):
            parse_config(_base_raw(replicates=0))

    def test_bad_kind_and_simulator(self):
        with pytest.raises(ConfigError):
            parse_config(_base_raw(kind="nope"))
        with pytest.raises(ConfigError):
            parse_config(_base_raw(simulator="exact"))

    def test_sha256_depends_on_raw(self):
        a = parse_config(_base_raw())
        b = parse_config(_base_raw(seed=8))
        assert a.sha256 != b.sha256
        assert a.sha256 == parse_config(_base_raw()).sha256

    def test_load_config(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(_base_raw()))
        cfg = load_config(str(p))
        assert cfg.seed == 7


class TestGenerateTruth:
    def test_shapes_and_sparsity(self):
        truth, cert = generate_truth(
            {"K": 5, "s0": 2, "mass_range": [0.3, 0.4], "shape": "random"}, 11
        )
        assert truth.dimension == 5
        for comp in truth.components:
            assert len(comp.active_set) == 2
            assert comp.nu > 0
        rho = mass_matrix(truth)
        assert cert.spectral_radius == pytest.approx(spectral_radius(rho), abs=1e-12)
        assert cert.spectral_radius < 1.0

    def test_s0_zero(self):
        truth, cert = generate_truth({"K": 3, "s0": 0}, 1)
        assert cert.spectral_radius == 0.0
        assert all(not c.active_set for c in truth.components)

    def test_rescales_to_spectral_target(self):
        truth, cert = generate_truth(
            {
                "K": 4,
                "s0": 4,
                "mass_range": [0.5, 0.6],
                "spectral_target": 0.8,
                "shape": "flat",
            },
            13,
        )
        assert cert.spectral_radius == pytest.approx(0.8, abs=1e-10)

    def test_certificates_vs_bruteforce_powers(self):
        truth, cert = generate_truth(
            {"K": 3, "s0": 2, "mass_range": [0.3, 0.5], "shape": "flat"}, 17
        )
        rho = mass_matrix(truth)
        c = cert.c
        P = np.eye(3)
        max_inf = 0.0
        max_1 = 0.0
        for n in range(1, 31):
            P = P @ rho
            max_inf = max(max_inf, np.abs(P).sum(axis=1).max() / c**n)
            max_1 = max(max_1, np.abs(P).sum(axis=0).max() / c**n)
        assert cert.R_inf == pytest.approx(max(max_inf, 1.0), rel=1e-10)
        assert cert.R_1 == pytest.approx(max(max_1, 1.0), rel=1e-10)

    def test_determinism(self):
        t1, c1 = generate_truth({"K": 3, "s0": 1}, [5, 0])
        t2, c2 = generate_truth({"K": 3, "s0": 1}, [5, 0])
        assert c1 == c2
        for a, b in zip(t1.components, t2.components):
            assert a.nu == b.nu
            assert a.active_set == b.active_set

    def test_bad_s0(self):
        with pytest.raises(ConfigError):
            generate_truth({"K": 2, "s0": 3}, 0)


class TestWriteCsv:
    def test_embeds_hash_and_config(self, tmp_path):
        cfg = parse_config(_base_raw())
        path = str(tmp_path / "out.csv")
        write_csv(path, ["a", "b"], [[1, 2], [3, 4]], cfg)
        lines = open(path).read().splitlines()
        assert lines[0] == f"# config_sha256={cfg.sha256}"
        assert lines[1].startswith("# config=")
        assert json.loads(lines[1][len("# config=") :]) == cfg.raw
        assert lines[2] == "a,b"
        assert lines[3] == "1,2"


class TestRateStudy:
    def test_smoke_and_reproducibility(self, tmp_path):
        raw = _base_raw(output_dir=str(tmp_path / "run1"))
        res = rate_study(parse_config(raw))
        # 2 T values x 1 replicate x K=2 components
        assert len(res.rows) == 4
        assert not res.errors
        assert np.isfinite(res.slope_d1T) and np.isfinite(res.slope_l1)
        csv1 = open(tmp_path / "run1" / "rate_study.csv", "rb").read()
        raw2 = _base_raw(output_dir=str(tmp_path / "run2"))
        rate_study(parse_config(raw2))
        csv2 = open(tmp_path / "run2" / "rate_study.csv", "rb").read()
        # byte-identical apart from nothing: output_dir is in raw, so compare
        # data rows only
        strip = lambda b: b.split(b"\n", 2)[2]
        assert strip(csv1) == strip(csv2)
        slopes = open(tmp_path / "run1" / "rate_study_slopes.csv").read()
        assert "d1T" in slopes and "l1" in slopes

    def test_byte_identical_same_dir(self, tmp_path):
        raw = _base_raw(output_dir=str(tmp_path))
        cfg = parse_config(raw)
        rate_study(cfg)
        first = open(tmp_path / "rate_study.csv", "rb").read()
        rate_study(cfg)
        assert open(tmp_path / "rate_study.csv", "rb").read() == first

    def test_replicate_isolation(self, tmp_path, monkeypatch):
        import sparsehawkes.experiments as exp

        real = exp._simulate
        calls = {"n": 0}

        def flaky(kind, truth, T, seed):
            calls["n"] += 1
            if calls["n"] == 1:
                raise RuntimeError("boom")
            return real(kind, truth, T, seed)

        monkeypatch.setattr(exp, "_simulate", flaky)
        res = rate_study(parse_config(_base_raw(output_dir=str(tmp_path))))
        assert len(res.errors) == 1
        assert "boom" in res.errors[0][2]
        assert len(res.rows) == 2  # the surviving T value
        assert os.path.exists(tmp_path / "rate_study_errors.csv")


class TestDiagnose:
    def test_empty_grid(self, tmp_path):
        raw = _base_raw(kind="diagnose", T_grid=[], output_dir=str(tmp_path))
        res = diagnose(parse_config(raw))
        assert res.rows == ()
        assert res.all_passed
        assert os.path.exists(tmp_path / "diagnostics.csv")

    def test_smoke(self, tmp_path):
        raw = _base_raw(
            kind="diagnose",
            T_grid=[200.0, 800.0],
            replicates=8,
            output_dir=str(tmp_path),
        )
        res = diagnose(parse_config(raw))
        checks = {r[0] for r in res.rows}
        assert {
            "rate_vs_mu",
            "mean_rate_le_C0",
            "path_avg_lambda2_le_C0bar",
            "mgf_le_exp_t_gamma",
            "ergodic_median_dev",
            "ergodic_dev_decreasing",
        } <= checks
        assert res.all_passed
        lines = open(tmp_path / "diagnostics.csv").read().splitlines()
        assert lines[2].split(",") == ["check", "k", "T", "value", "bound", "passed"]
