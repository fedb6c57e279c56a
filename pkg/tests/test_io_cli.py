import numpy as np
import pytest

from shareboost.cli import max_gradient_error, run_cli
from shareboost.exceptions import InputError
from shareboost.features import IdentityMap, QuadraticMap
from shareboost.io import (
    ScalingTransform,
    dumps_model,
    load_dataset,
    load_model,
    read_rows,
    save_model,
    scale_features,
    write_dataset,
)
from shareboost.model import Dataset, WeightModel
from shareboost.trainer import TrainTrace


def write(path, text):
    path.write_text(text)
    return str(path)


def lines_of(path):
    return path.read_text().splitlines()


class TestReadDataset:
    def test_csv_with_header(self, tmp_path):
        p = write(tmp_path / "a.csv", "f1,f2,label\n0.5,1,a\n-1,2,b\n3,0,a\n")
        data = load_dataset(p)
        assert (data.m, data.d, data.k) == (3, 2, 2)
        assert data.classes == ["a", "b"]
        np.testing.assert_array_equal(data.y, [0, 1, 0])
        np.testing.assert_array_equal(data.X[1], [-1.0, 2.0])

    def test_csv_without_header_and_label_column(self, tmp_path):
        p = write(tmp_path / "a.csv", "2,0.1,0.2\n1,0.3,0.4\n10,0.5,0.6\n")
        data = load_dataset(p, label_col="0")
        assert data.d == 2
        assert data.classes == ["1", "2", "10"]
        np.testing.assert_array_equal(data.y, [1, 0, 2])

    def test_csv_label_by_name(self, tmp_path):
        p = write(tmp_path / "a.csv", "cls,x,y\nu,1,2\nv,3,4\n")
        data = load_dataset(p, label_col="cls")
        np.testing.assert_array_equal(data.X, [[1, 2], [3, 4]])
        with pytest.raises(InputError, match="no column"):
            load_dataset(p, label_col="nope")

    def test_sparse_line(self, tmp_path):
        p = write(tmp_path / "a.svm", "3 1:0.5 7:-1\n1 2:1\n")
        data = load_dataset(p, "sparse")
        assert data.y[0] == 2
        assert data.d >= 7
        assert data.X[0, 6] == -1.0
        assert data.X[0, 0] == 0.5
        assert data.k == 3

    def test_sparse_declared_dimension(self, tmp_path):
        p = write(tmp_path / "a.svm", "1 2:1\n")
        assert load_dataset(p, "sparse", d=5).d == 5
        with pytest.raises(InputError, match="exceeds"):
            load_dataset(p, "sparse", d=1)

    @pytest.mark.parametrize("fmt", ["csv", "sparse"])
    def test_empty_file(self, tmp_path, fmt):
        p = write(tmp_path / "empty", "")
        with pytest.raises(InputError):
            load_dataset(p, fmt)

    @pytest.mark.parametrize("fmt,text,line", [
        ("csv", "f1,label\n1,a\nx,b\n", 3),
        ("csv", "1,2,a\n1,b\n", 2),
        ("sparse", "1 1:2\n\n2 3\n", 3),
        ("sparse", "0 1:2\n", 1),
        ("sparse", "1 1:2 1:3\n", 1),
        ("sparse", "1 1:nan\n", 1),
    ])
    def test_malformed_reports_line(self, tmp_path, fmt, text, line):
        p = write(tmp_path / "bad", text)
        with pytest.raises(InputError, match=f"bad:{line}:"):
            load_dataset(p, fmt)

    def test_unknown_label(self, tmp_path):
        p = write(tmp_path / "a.csv", "f1,label\n1,a\n2,c\n")
        with pytest.raises(InputError, match=r"a.csv:3: unknown label 'c'"):
            load_dataset(p, classes=["a", "b"])

    @pytest.mark.parametrize("fmt", ["csv", "sparse"])
    def test_write_read_round_trip(self, tmp_path, fmt):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(20, 4))
        X[X < 0] = 0.0
        data = Dataset(X, rng.integers(3, size=20), 3)
        p = str(tmp_path / "d")
        write_dataset(p, data, fmt)
        back = load_dataset(p, fmt, classes=["1", "2", "3"], d=4 if fmt == "sparse" else None)
        np.testing.assert_array_equal(back.X, X)
        np.testing.assert_array_equal(back.y, data.y)


class TestScaling:
    def test_midpoint_maps_to_zero(self):
        data = Dataset(np.array([[0.0], [5.0], [10.0]]), [0, 1, 0], 2)
        scaled, tr = scale_features(data)
        np.testing.assert_allclose(scaled.X[:, 0], [-1, 0, 1])
        assert tr.apply([[5.0]])[0, 0] == 0
        assert scaled.bounded

    def test_constant_feature(self):
        data = Dataset(np.array([[3.0, 1.0], [3.0, 2.0]]), [0, 1], 2)
        scaled, tr = scale_features(data)
        np.testing.assert_array_equal(scaled.X[:, 0], 0.0)
        assert tr.scale[0] == 0

    def test_keep_bounded(self):
        X = np.array([[0.1, -0.5], [0.3, 0.2]])
        data = Dataset(X, [0, 1], 2)
        scaled, tr = scale_features(data, keep_bounded=True)
        np.testing.assert_array_equal(scaled.X, X)
        np.testing.assert_array_equal(tr.scale, 1.0)
        np.testing.assert_array_equal(tr.shift, 0.0)

    def test_new_points_are_clipped_only_at_train_time(self):
        data = Dataset(np.array([[0.0], [2.0]]), [0, 1], 2)
        _, tr = scale_features(data)
        assert tr.apply([[4.0]])[0, 0] == 3.0

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            ScalingTransform.identity(3).apply(np.zeros((2, 4)))

    def test_dict_round_trip(self):
        tr = ScalingTransform(np.array([0.1, 1 / 3]), np.array([2.0, 0.0]))
        back = ScalingTransform.from_dict(tr.to_dict())
        np.testing.assert_array_equal(back.shift, tr.shift)
        np.testing.assert_array_equal(back.scale, tr.scale)


class TestModelFile:
    def make_model(self, rng, fmap=None, d_raw=5, k=4):
        d = d_raw if fmap is None else fmap.output_dimension
        W = np.zeros((k, d))
        support = sorted(rng.choice(d, size=min(d, 6), replace=False).tolist())
        W[:, support] = rng.normal(size=(k, len(support))) / 3
        scaling = ScalingTransform(rng.normal(size=d_raw), rng.uniform(0.1, 2, size=d_raw))
        return WeightModel(W, support, fmap, scaling, [f"c{i}" for i in range(k)], {"seed": 1})

    @pytest.mark.parametrize("fmap", [None, IdentityMap(5), QuadraticMap(5)])
    def test_round_trip_predictions(self, tmp_path, fmap):
        rng = np.random.default_rng(1)
        model = self.make_model(rng, fmap)
        p = str(tmp_path / "m.json")
        save_model(p, model)
        back = load_model(p)
        V = rng.uniform(-3, 3, size=(1000, 5))
        np.testing.assert_array_equal(back.decision_function(V), model.decision_function(V))
        np.testing.assert_array_equal(back.predict(V), model.predict(V))
        assert back.classes == model.classes and back.meta == model.meta
        assert dumps_model(back) == dumps_model(model)

    def test_rejects_bad_documents(self, tmp_path):
        for text in ["not json", '{"format": "other"}',
                     '{"format": "shareboost-model", "version": 1, "k": 2}']:
            p = write(tmp_path / "m.json", text)
            with pytest.raises(InputError):
                load_model(p)

    def test_predict_dimension_mismatch(self):
        model = self.make_model(np.random.default_rng(2))
        with pytest.raises(InputError):
            model.predict(np.zeros((3, 4)))


@pytest.fixture
def code_csv(tmp_path):
    p = str(tmp_path / "code.csv")
    assert run_cli(["synth", "--kind", "code", "--k", "16", "--m", "1600", "--seed", "0",
                    "--out", p]) == 0
    return p


class TestCli:
    def test_train_eval_code_dataset(self, tmp_path, code_csv, capsys):
        model, trace = str(tmp_path / "m.json"), tmp_path / "t.tsv"
        assert run_cli(["train", "--data", code_csv, "--rounds", "8", "--no-scale",
                        "--out", model, "--trace", str(trace)]) == 0
        capsys.readouterr()
        assert run_cli(["eval", "--model", model, "--data", code_csv]) == 0
        out = dict(line.split("\t") for line in capsys.readouterr().out.splitlines())
        assert float(out["zero_one_error"]) == 0.0
        assert int(out["support_size"]) <= 8
        rounds = TrainTrace.from_text(trace.read_text())
        assert len(rounds) == load_model(model).meta["rounds"]

    def test_predict_writes_labels(self, tmp_path, code_csv):
        model, out = str(tmp_path / "m.json"), tmp_path / "pred.txt"
        assert run_cli(["train", "--data", code_csv, "--rounds", "6", "--out", model]) == 0
        assert run_cli(["predict", "--model", model, "--data", code_csv, "--out", str(out)]) == 0
        pred = lines_of(out)
        truth = [row.rsplit(",", 1)[1] for row in open(code_csv).read().splitlines()[1:]]
        assert len(pred) == 1600
        assert np.mean(np.array(pred) == np.array(truth)) > 0.9

    def test_predict_mismatched_dimension(self, tmp_path, code_csv, capsys):
        model = str(tmp_path / "m.json")
        assert run_cli(["train", "--data", code_csv, "--rounds", "2", "--out", model]) == 0
        other = write(tmp_path / "o.csv", "f1,f2,label\n1,2,1\n")
        assert run_cli(["predict", "--model", model, "--data", other]) == 2
        assert "features" in capsys.readouterr().err

    def test_path_table(self, tmp_path, code_csv, capsys):
        model, trace, table = (str(tmp_path / n) for n in ("m.json", "t.tsv", "p.tsv"))
        assert run_cli(["train", "--data", code_csv, "--rounds", "4", "--out", model,
                        "--trace", trace]) == 0
        assert run_cli(["path", "--trace", trace, "--out", table]) == 0
        with open(trace) as fh:
            expect = TrainTrace.from_text(fh.read()).path_table()
        assert open(table).read() == expect
        capsys.readouterr()
        assert run_cli(["path", "--trace", trace]) == 0
        assert capsys.readouterr().out == expect

    def test_deterministic_model_files(self, tmp_path, code_csv):
        a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        for out in (a, b):
            assert run_cli(["train", "--data", code_csv, "--rounds", "5", "--seed", "3",
                            "--threads", "1", "--out", out]) == 0
        assert open(a, "rb").read() == open(b, "rb").read()

    @pytest.mark.parametrize("extra", [
        ["--features", "stumps", "--rounds", "3"],
        ["--features", "quadratic", "--rounds", "3", "--rule", "refit"],
        ["--features", "anchors", "--anchors", "5", "--quantiles", "0.5", "--rounds", "2",
         "--reg", "frob", "--lambda", "1e-4"],
        ["--rounds", "3", "--rule", "vector", "--reg", "sminf1"],
        ["--rounds", "3", "--rule", "linesearch"],
    ])
    def test_train_variants(self, tmp_path, extra):
        rng = np.random.default_rng(4)
        V = rng.uniform(-2, 2, size=(120, 3))
        y = (V[:, 0] > 0).astype(int) + (V[:, 1] > 0.5)
        data_path = str(tmp_path / "d.csv")
        write_dataset(data_path, Dataset(V, y, 3))
        model = str(tmp_path / "m.json")
        assert run_cli(["train", "--data", data_path, "--out", model] + extra) == 0
        loaded = load_model(model)
        assert loaded.predict(V).shape == (120,)
        assert run_cli(["eval", "--model", model, "--data", data_path]) == 0

    def test_sparse_format_and_heldout(self, tmp_path):
        train, held = str(tmp_path / "a.svm"), str(tmp_path / "b.svm")
        assert run_cli(["synth", "--k", "4", "--m", "200", "--format", "sparse", "--out", train]) == 0
        assert run_cli(["synth", "--k", "4", "--m", "50", "--seed", "1", "--format", "sparse",
                        "--out", held]) == 0
        model, trace = str(tmp_path / "m.json"), str(tmp_path / "t.tsv")
        assert run_cli(["train", "--data", train, "--format", "sparse", "--heldout", held,
                        "--rounds", "3", "--out", model, "--trace", trace]) == 0
        assert run_cli(["eval", "--model", model, "--data", held, "--format", "sparse"]) == 0
        assert "heldout" in open(trace).read().splitlines()[0]

    def test_block_synth(self, tmp_path):
        p = str(tmp_path / "b.csv")
        assert run_cli(["synth", "--kind", "block", "--k", "8", "--s", "6", "--m", "480",
                        "--out", p]) == 0
        data = load_dataset(p)
        assert (data.m, data.d, data.k) == (480, 18, 8)

    def test_gradcheck(self, capsys):
        assert run_cli(["gradcheck"]) == 0
        err = float(capsys.readouterr().out.split("\t")[1])
        assert err <= 1e-6

    def test_gradient_error_helper(self):
        assert max_gradient_error(np.random.default_rng(5), instances=10) <= 1e-6

    @pytest.mark.parametrize("argv", [
        [],
        ["frobnicate"],
        ["train", "--data", "x.csv"],
        ["train", "--data", "x.csv", "--out", "m", "--rule", "bogus"],
        ["train", "--data", "x.csv", "--out", "m", "--threads", "0"],
        ["train", "--data", "x.csv", "--out", "m", "--quantiles", "a,b"],
        ["synth", "--out", "x", "--k", "many"],
    ])
    def test_usage_errors(self, argv, capsys):
        assert run_cli(argv) == 1

    def test_data_errors(self, tmp_path, capsys):
        assert run_cli(["train", "--data", str(tmp_path / "missing.csv"), "--out", "m"]) == 2
        assert run_cli(["eval", "--model", str(tmp_path / "missing.json"), "--data", "x"]) == 2
        assert run_cli(["synth", "--k", "6", "--out", str(tmp_path / "x.csv")]) == 2
        bad = write(tmp_path / "bad.csv", "f1,label\n1,a\nzz,b\n")
        assert run_cli(["train", "--data", bad, "--out", str(tmp_path / "m")]) == 2
        assert "bad.csv:3" in capsys.readouterr().err

    def test_unknown_label_in_eval(self, tmp_path, code_csv, capsys):
        model = str(tmp_path / "m.json")
        assert run_cli(["train", "--data", code_csv, "--rounds", "1", "--out", model]) == 0
        other = write(tmp_path / "o.csv", ",".join(f"f{i}" for i in range(20)) + ",label\n"
                      + ",".join(["0"] * 20) + ",99\n")
        assert run_cli(["eval", "--model", model, "--data", other]) == 2
        assert "unknown label" in capsys.readouterr().err

    def test_read_rows_checks_dimension(self, tmp_path):
        p = write(tmp_path / "a.csv", "1,2,3\n")
        with pytest.raises(InputError):
            read_rows(p, "csv", d=3)
