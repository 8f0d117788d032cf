import numpy as np
import pytest

from rsens.data import ConfigError, Dataset, ingest_csv, validate_config
from rsens.errors import DataError
from rsens.gp import EQKernelParams, gp_fit, gp_latent_predict


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestIngest:
    def test_three_rows(self, tmp_path):
        p = write(tmp_path, "a,b,y\n1,10,0.5\n2,20,1.5\n4,-5,2.0\n")
        raw = ingest_csv(p, "y", standardize=False)
        np.testing.assert_array_equal(raw.X, [[1, 10], [2, 20], [4, -5]])
        np.testing.assert_array_equal(raw.y, [0.5, 1.5, 2.0])
        assert raw.feature_names == ("a", "b")
        std = ingest_csv(p, "y")
        np.testing.assert_allclose(std.X.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(std.X.std(axis=0), 1, atol=1e-12)
        np.testing.assert_allclose(std.to_raw_X(std.X), raw.X, atol=1e-12)
        assert std.y.std() == pytest.approx(1, abs=1e-12)

    def test_letter_in_cell(self, tmp_path):
        p = write(tmp_path, "a,b,y\n1,2,3\n4,x5,6\n")
        with pytest.raises(DataError, match=r"row 3, column 'b'"):
            ingest_csv(p, "y")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            ingest_csv(tmp_path / "nope.csv", "y")

    def test_constant_column(self, tmp_path):
        p = write(tmp_path, "a,b,y\n1,7,3\n2,7,6\n3,7,1\n")
        with pytest.raises(DataError, match="constant predictor"):
            ingest_csv(p, "y")

    def test_field_count(self, tmp_path):
        p = write(tmp_path, "a,y\n1,2\n3\n")
        with pytest.raises(DataError, match="row 3"):
            ingest_csv(p, "y")

    def test_target_domain(self, tmp_path):
        p = write(tmp_path, "a,y\n1,0\n2,2\n3,1\n")
        with pytest.raises(DataError, match="row 3"):
            ingest_csv(p, "y", likelihood="probit")
        p = write(tmp_path, "a,y\n1,0\n2,1.5\n", name="p.csv")
        with pytest.raises(DataError, match="non-negative integer"):
            ingest_csv(p, "y", likelihood="poisson")

    def test_count_target_not_standardized(self, tmp_path):
        p = write(tmp_path, "a,y\n1,0\n2,3\n5,1\n")
        d = ingest_csv(p, "y", likelihood="poisson")
        np.testing.assert_array_equal(d.y, [0, 3, 1])
        assert d.y_mean == 0 and d.y_sd == 1

    def test_missing_target(self, tmp_path):
        with pytest.raises(DataError, match="target column"):
            ingest_csv(write(tmp_path, "a,b\n1,2\n3,4\n"), "y")

    def test_column_selection(self, tmp_path):
        p = write(tmp_path, "a,b,c,y\n1,2,3,4\n2,1,5,0\n3,3,2,1\n")
        d = ingest_csv(p, "y", columns=["c", "a"], standardize=False)
        np.testing.assert_array_equal(d.X[:, 0], [3, 5, 2])


class TestDataset:
    def test_validation(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((3, 2)), np.zeros(2), ("a", "b"))
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 2)), [0.0, np.nan], ("a", "b"))
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 2)), np.zeros(2), ("a",))

    def test_subset_keeps_transform(self):
        d = Dataset(np.arange(6.0).reshape(3, 2), [1.0, 2.0, 3.0], ("a", "b"), x_mean=[1, 1], x_sd=[2, 2])
        s = d.subset([0, 2])
        assert s.n == 2
        np.testing.assert_array_equal(s.x_sd, d.x_sd)

    def test_prediction_round_trip(self, tmp_path):
        # a GP on standardized data equals a raw-scale GP with rescaled hyperparameters
        rng = np.random.default_rng(0)
        Xr = rng.normal(loc=[5, -2], scale=[3, 0.5], size=(25, 2))
        yr = 10 + 4 * np.sin(Xr[:, 0] / 3) + Xr[:, 1] + 0.1 * rng.normal(size=25)
        lines = ["u,v,y"] + [",".join(repr(float(v)) for v in (a, b, c)) for (a, b), c in zip(Xr, yr)]
        d = ingest_csv(write(tmp_path, "\n".join(lines) + "\n"), "y")
        ell, sf, sn = (1.2, 0.8), 1.5, 0.05
        std_model = gp_fit(d.X, d.y, kernel=EQKernelParams(sf, ell), noise_var=sn, optimize_hypers=False)
        raw_kernel = EQKernelParams(sf * d.y_sd**2, tuple(np.array(ell) * d.x_sd))
        raw_model = gp_fit(Xr, yr, kernel=raw_kernel, noise_var=sn * d.y_sd**2, optimize_hypers=False, prior_mean=d.y_mean)
        for x in rng.normal(loc=[5, -2], scale=[3, 0.5], size=(10, 2)):
            m_std, _ = gp_latent_predict(std_model, d.from_raw_X(x))
            m_raw, _ = gp_latent_predict(raw_model, x)
            assert float(d.to_raw_y(m_std)) == pytest.approx(m_raw, rel=1e-10, abs=1e-10)


class TestConfig:
    def test_defaults_filled(self):
        cfg = validate_config("simulate-main", {"seed": 3})
        assert cfg["shape"] == "x" and cfg["reps"] == 20 and cfg["seed"] == 3

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            validate_config("simulate-main", {"seed": 1, "shapes": "x"})

    def test_wrong_type(self):
        with pytest.raises(ConfigError):
            validate_config("simulate-main", {"seed": "7"})
        with pytest.raises(ConfigError):
            validate_config("simulate-main", {"seed": 1, "reps": True})

    def test_seed_required_for_stochastic(self):
        for cmd, extra in (("simulate-main", {}), ("simulate-interactions", {}),
                           ("cv", {"data": "a", "target": "y"}), ("stability", {"data": "a", "target": "y"})):
            with pytest.raises(ConfigError, match="--seed"):
                validate_config(cmd, extra)
        assert validate_config("check", {})["seed"] == 0

    def test_unknown_command(self):
        with pytest.raises(ConfigError):
            validate_config("plot", {})

    def test_config_error_is_value_error(self):
        assert issubclass(ConfigError, ValueError)
