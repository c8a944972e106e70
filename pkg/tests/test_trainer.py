import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsgd_bayes.bounds import DpSgdConfig, ai_bound
from dpsgd_bayes.trainer import (
    Architecture,
    ModelSpec,
    ModelState,
    SchemaError,
    SensitivityTrace,
    TrainConfig,
    clip,
    dp_sgd_step,
    encode_records,
    load_csv,
    load_schema,
    per_example_gradients,
    r_t_approx,
    r_t_full,
    schema_from_mapping,
    train,
)
from dpsgd_bayes.trainer.data import parse_domain
from dpsgd_bayes.trainer.models import loss
from dpsgd_bayes.trainer.synthetic import adult_like, purchase_like, write_synthetic
from oracles import brute_force_radius, brute_force_sensitivity, clip_list, lr_grad, mlp_grad

HEADER = ["age", "colour", "height", "y"]
ROWS = [
    ["30", "red", "1.7", "1"],
    ["40", "blue", "1.6", "0"],
    ["30", "green", "1.9", "1"],
    ["50", "red", "1.5", "0"],
    ["40", "blue", "1.8", "1"],
]


def small_schema(**over):
    kv = {"label": "y", "sensitive": "age", "sensitive_type": "numeric",
          "attribute_domain": "30, 40, 50", "categorical": "colour", "numeric": "height"}
    kv.update(over)
    return schema_from_mapping(kv)


@pytest.fixture
def tiny():
    return encode_records(HEADER, ROWS, small_schema())


def encode_synthetic(tmp_dir, header, rows, schema_text):
    path = tmp_dir / "synthetic.schema"
    path.write_text(schema_text)
    return encode_records(header, rows, load_schema(path))


@pytest.fixture(scope="module")
def adult_small(tmp_path_factory):
    return encode_synthetic(tmp_path_factory.mktemp("adult"), *adult_like(n=600, seed=3, age_effect=2.0))


@pytest.fixture(scope="module")
def purchase_small(tmp_path_factory):
    return encode_synthetic(tmp_path_factory.mktemp("purchase"),
                            *purchase_like(n=400, n_features=12, seed=4, effect=2.0))


class TestData:
    def test_domain_parsing(self):
        assert parse_domain("17..20", "numeric") == [17, 18, 19, 20]
        assert parse_domain("a, b", "categorical") == ["a", "b"]
        with pytest.raises(SchemaError):
            parse_domain("5..1", "numeric")
        with pytest.raises(SchemaError):
            parse_domain("1, x", "numeric")

    def test_encoding_layout(self, tiny):
        assert tiny.feature_names == ["height", "colour=blue", "colour=green", "colour=red", "age"]
        assert tiny.input_dim == 5
        assert tiny.domain_size == 3
        assert tiny.base[:, 0].mean() == pytest.approx(0.0, abs=1e-12)
        assert tiny.base[:, 1:].sum(axis=1).tolist() == [1.0] * 5
        assert tiny.sens_codes.tolist() == [0, 1, 0, 2, 1]
        X = tiny.design()
        assert np.array_equal(X[:, -1], tiny.sens_encoding[tiny.sens_codes, 0])

    def test_variants(self, tiny):
        v = tiny.variants([0, 3])
        assert v.shape == (2, 3, 5)
        assert np.array_equal(v[1, tiny.sens_codes[3]], tiny.design([3])[0])

    def test_categorical_sensitive_is_one_hot(self):
        ds = encode_records(HEADER, ROWS, small_schema(
            sensitive="colour", sensitive_type="categorical", attribute_domain="red, green, blue",
            categorical="", numeric="height, age"))
        assert np.array_equal(ds.sens_encoding, np.eye(3))
        assert ds.feature_names[-3:] == ["colour=red", "colour=green", "colour=blue"]

    def test_exclude_sensitive(self):
        ds = encode_records(HEADER, ROWS, small_schema(include_sensitive="false"))
        assert ds.sens_encoding.shape == (3, 0)
        assert ds.input_dim == 4

    @pytest.mark.parametrize("mutate,msg", [
        (lambda rows: [r[:1] + r[2:] for r in rows], "cells"),
        (lambda rows: [["31", *r[1:]] if i == 0 else r for i, r in enumerate(rows)], "outside"),
        (lambda rows: [[r[0], r[1], "tall", r[3]] for r in rows], "non-numeric"),
    ])
    def test_csv_errors(self, tmp_path, mutate, msg):
        path = tmp_path / "d.csv"
        rows = mutate(ROWS)
        path.write_text("\n".join(",".join(r) for r in [HEADER, *rows]) + "\n")
        with pytest.raises(SchemaError, match=msg):
            load_csv(path, small_schema())

    def test_missing_column(self):
        with pytest.raises(SchemaError, match="missing column"):
            encode_records(["age", "y"], [["30", "1"]], small_schema())

    def test_schema_file(self, tmp_path):
        path = tmp_path / "s.schema"
        path.write_text("# comment\nlabel = y\nsensitive = age\nsensitive_type = numeric\n"
                        "attribute_domain = 30..50  # inclusive\ncategorical = colour\nnumeric = height\n")
        s = load_schema(path)
        assert s.attribute_domain == tuple(range(30, 51))
        with pytest.raises(SchemaError):
            schema_from_mapping({"label": "y"})

    def test_synthetic_files_round_trip(self, tmp_path):
        csv_path, schema_path = write_synthetic("purchase", tmp_path, n=300, seed=1)
        ds = load_csv(csv_path, schema_path)
        assert ds.n == 300 and ds.domain_size == 2
        cfg = TrainConfig.from_file(schema_path)
        assert cfg.noise_multiplier == 1.8 and cfg.epochs == 30


def finite_difference(spec, theta, x, y, eps=1e-6):
    g = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = eps
        g[i] = (loss(spec, theta + e, x[None], np.array([y]))[0]
                - loss(spec, theta - e, x[None], np.array([y]))[0]) / (2 * eps)
    return g


class TestModels:
    @pytest.mark.parametrize("arch,act", [("logistic_regression", "tanh"), ("mlp", "tanh"), ("mlp", "relu")])
    def test_gradients_match_finite_differences(self, arch, act):
        spec = ModelSpec(arch, 4, hidden_width=5, activation=act)
        rng = np.random.default_rng(0)
        theta = spec.init(rng, 0.7)
        for _ in range(5):
            x = rng.standard_normal(4)
            y = float(rng.integers(0, 2))
            g = per_example_gradients(spec, theta, x[None], np.array([y]))[0]
            assert np.max(np.abs(g - finite_difference(spec, theta, x, y))) <= 1e-5

    def test_gradients_match_reference(self):
        rng = np.random.default_rng(1)
        spec = ModelSpec("mlp", 3, hidden_width=4)
        theta = spec.init(rng, 0.5)
        x = rng.standard_normal(3)
        g = per_example_gradients(spec, theta, x[None], np.array([1.0]))[0]
        assert np.allclose(g, mlp_grad(theta.tolist(), x.tolist(), 1.0, 4, "tanh"), atol=1e-14)
        spec = ModelSpec("logistic_regression", 3)
        theta = spec.init(rng, 0.5)
        g = per_example_gradients(spec, theta, x[None], np.array([0.0]))[0]
        assert np.allclose(g, lr_grad(theta.tolist(), x.tolist(), 0.0), atol=1e-15)

    def test_zero_weight_logistic_gradient(self):
        spec = ModelSpec("logistic_regression", 3)
        x = np.array([0.5, -2.0, 4.0])
        g = per_example_gradients(spec, np.zeros(4), x[None], np.array([1.0]))[0]
        assert np.array_equal(g, np.append(-x / 2, -0.5))

    def test_shapes(self):
        assert ModelSpec("logistic_regression", 7).n_params == 8
        assert ModelSpec("logistic_regression", 7, fit_intercept=False).n_params == 7
        assert ModelSpec("mlp", 7, hidden_width=3).n_params == 7 * 3 + 3 + 3 + 1
        with pytest.raises(ValueError):
            ModelState(ModelSpec("mlp", 2, hidden_width=2), np.zeros(3))


class TestStep:
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.floats(0.01, 10))
    def test_clip(self, g, c):
        out = clip(np.array([g]), c)[0]
        assert np.linalg.norm(out) <= c * (1 + 1e-12)
        assert np.allclose(out, clip_list(g, c), rtol=1e-12, atol=1e-300)

    def test_clip_leaves_short_vectors(self):
        assert np.array_equal(clip(np.array([[0.3, 0.4]]), 1.0), np.array([[0.3, 0.4]]))

    def test_noise_free_step_divides_by_expected_batch(self):
        spec = ModelSpec("logistic_regression", 2)
        m = ModelState(spec, np.zeros(3))
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        y = np.array([1.0, 0.0])
        cfg = TrainConfig(noise_multiplier=0.0, clip_norm=10.0, expected_batch=4, learning_rate=0.8)
        out = dp_sgd_step(m, X, y, cfg, np.random.default_rng(0))
        g = np.array([-0.5, 0.0, -0.5]) + np.array([0.0, 0.5, 0.5])
        assert np.allclose(out.theta, -0.8 * g / 4)
        assert out.step == 1

    def test_empty_batch_takes_noise_step(self):
        spec = ModelSpec("logistic_regression", 2)
        m = ModelState(spec, np.zeros(3))
        cfg = TrainConfig(noise_multiplier=2.0, clip_norm=0.5, expected_batch=10, learning_rate=1.0)
        out = dp_sgd_step(m, np.zeros((0, 2)), np.zeros(0), cfg, np.random.default_rng(5))
        expect = -2.0 * 0.5 * np.random.default_rng(5).standard_normal(3) / 10
        assert np.allclose(out.theta, expect)


def brute_force(ds, spec, theta, idx, c, radius=False):
    if spec.architecture is Architecture.LOGISTIC_REGRESSION:
        fn = lambda x, y: lr_grad(theta.tolist(), x, y, spec.fit_intercept)
    else:
        fn = lambda x, y: mlp_grad(theta.tolist(), x, y, spec.hidden_width, spec.activation)
    f = brute_force_radius if radius else brute_force_sensitivity
    return f(fn, ds.base[idx].tolist(), ds.labels[idx].tolist(), ds.sens_encoding.tolist(), c)


class TestSensitivity:
    @pytest.mark.parametrize("arch", ["logistic_regression", "mlp"])
    @pytest.mark.parametrize("which", ["adult", "purchase"])
    def test_matches_brute_force(self, arch, which, adult_small, purchase_small):
        ds = adult_small if which == "adult" else purchase_small
        spec = ModelSpec(arch, ds.input_dim, hidden_width=4)
        rng = np.random.default_rng(11)
        for c in (0.05, 1.0, 50.0):
            theta = spec.init(rng, 1.5)
            m = ModelState(spec, theta)
            idx = rng.choice(ds.n, 6, replace=False)
            full = r_t_full(m, idx, ds, c)
            assert full == pytest.approx(min(2 * c, brute_force(ds, spec, theta, idx, c)), abs=1e-12)
            approx = r_t_approx(m, idx, ds, c)
            assert approx == pytest.approx(min(2 * c, brute_force(ds, spec, theta, idx, c, True)), abs=1e-12)

    def test_closed_form_matches_generic(self, adult_small, purchase_small):
        for ds in (adult_small, purchase_small):
            spec = ModelSpec("logistic_regression", ds.input_dim)
            m = ModelState(spec, spec.init(np.random.default_rng(2), 2.0))
            idx = np.arange(40)
            assert r_t_full(m, idx, ds, 1.0) == pytest.approx(r_t_full(m, idx, ds, 1.0, "generic"), abs=1e-12)
            assert r_t_approx(m, idx, ds, 1.0) == pytest.approx(r_t_approx(m, idx, ds, 1.0, "generic"), abs=1e-12)

    def test_one_hot_closed_form(self):
        ds = encode_records(HEADER, ROWS, small_schema(
            sensitive="colour", sensitive_type="categorical", attribute_domain="red, green, blue",
            categorical="", numeric="height, age"))
        spec = ModelSpec("logistic_regression", ds.input_dim)
        theta = spec.init(np.random.default_rng(3), 3.0)
        m = ModelState(spec, theta)
        idx = np.arange(5)
        assert r_t_full(m, idx, ds, 0.7) == pytest.approx(brute_force(ds, spec, theta, idx, 0.7), abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10 ** 6), st.floats(0.01, 10))
    def test_sandwich(self, seed, c):
        header, rows, _ = purchase_like(n=60, n_features=6, seed=seed % 97)
        ds = encode_records(header, rows, schema_from_mapping({
            "label": "label", "sensitive": "f0", "attribute_domain": "0, 1",
            "numeric": ", ".join(f"f{j}" for j in range(1, 6))}))
        for arch in ("logistic_regression", "mlp"):
            spec = ModelSpec(arch, ds.input_dim, hidden_width=3)
            m = ModelState(spec, spec.init(np.random.default_rng(seed), 1.0))
            idx = np.arange(20)
            full, approx = r_t_full(m, idx, ds, c), r_t_approx(m, idx, ds, c)
            assert full <= approx * (1 + 1e-12) + 1e-15
            assert approx <= 2 * full * (1 + 1e-12) + 1e-15
            assert approx <= 2 * c

    def test_excluded_attribute_has_zero_sensitivity(self):
        ds = encode_records(HEADER, ROWS, small_schema(include_sensitive="false"))
        for arch in ("logistic_regression", "mlp"):
            spec = ModelSpec(arch, ds.input_dim, hidden_width=3)
            m = ModelState(spec, spec.init(np.random.default_rng(0), 1.0))
            assert r_t_full(m, np.arange(5), ds, 1.0) == 0.0
            assert r_t_approx(m, np.arange(5), ds, 1.0) <= 1e-15

    def test_empty_batch(self, tiny):
        spec = ModelSpec("logistic_regression", tiny.input_dim)
        m = ModelState(spec, np.ones(spec.n_params))
        assert r_t_full(m, [], tiny, 1.0) == 0.0

    def test_logistic_sensitivity_stays_below_cap(self, adult_small):
        # sigma(z) - y keeps its sign for a fixed label, so substitutions of one
        # record never produce opposite clipped gradients
        spec = ModelSpec("logistic_regression", adult_small.input_dim)
        theta = np.zeros(spec.n_params)
        theta[adult_small.base.shape[1]] = 50.0
        m = ModelState(spec, theta)
        r = r_t_full(m, np.arange(200), adult_small, 1e-6)
        assert 0.0 < r < 2e-6
        assert r == pytest.approx(brute_force(adult_small, spec, theta, np.arange(200), 1e-6), abs=1e-18)

    def test_mlp_gradients_rotate_under_substitution(self, purchase_small):
        # hidden units can turn the clipped gradient by more than 60 degrees
        spec = ModelSpec("mlp", purchase_small.input_dim, hidden_width=4)
        rng = np.random.default_rng(0)
        best = max(r_t_full(ModelState(spec, spec.init(rng, 4.0)), np.arange(100), purchase_small, 1e-6)
                   for _ in range(5))
        assert best <= 2e-6
        assert best > 1e-6


class TestTraceIo:
    def test_round_trip(self, tmp_path):
        tr = SensitivityTrace([0.1, 0.25, 2.0 / 3.0], "approximate", [3, 4, 5])
        tr.to_csv(tmp_path / "t.csv")
        back = SensitivityTrace.from_csv(tmp_path / "t.csv")
        assert back.values == tr.values and back.mode == "approximate"

    @pytest.mark.parametrize("body", ["t,R_t\n2,0.1\n", "t,R_t\n1,nan\n", "x,y\n1,2\n", "t,R_t\n1,abc\n"])
    def test_rejects_malformed(self, tmp_path, body):
        (tmp_path / "t.csv").write_text(body)
        with pytest.raises(ValueError):
            SensitivityTrace.from_csv(tmp_path / "t.csv")


class TestTrain:
    def test_deterministic(self, purchase_small):
        cfg = TrainConfig(noise_multiplier=1.0, expected_batch=40, epochs=2, learning_rate=0.3)
        a = train(purchase_small, cfg, "ai_full", seed=7)
        b = train(purchase_small, cfg, "ai_full", seed=7)
        c = train(purchase_small, cfg, "ai_full", seed=8)
        assert a.deterministic_view() == b.deterministic_view()
        assert a.deterministic_view() != c.deterministic_view()

    def test_report_contents(self, purchase_small):
        cfg = TrainConfig(noise_multiplier=1.5, expected_batch=40, epochs=3, learning_rate=0.3)
        rep = train(purchase_small, cfg, "ai_full", seed=1)
        assert rep.steps_per_epoch == 10
        assert [e.steps for e in rep.epochs] == [10, 20, 30]
        assert len(rep.traces["full"]) == len(rep.traces["approx"]) == 30
        for e in rep.epochs:
            assert e.ai_beta_approx <= e.ai_beta_full + 1e-15
            assert e.mia_beta <= e.ai_beta_approx + 1e-15
            assert e.ai_data_dependent
            assert "ai_caveat" in e.to_dict()
            assert set(e.wall_time) == {"train", "mia", "ai_full", "ai_approx"}
        assert rep.ai_data_dependent

    def test_mia_only_has_no_ai_fields(self, purchase_small):
        cfg = TrainConfig(noise_multiplier=1.5, expected_batch=40, epochs=1)
        rep = train(purchase_small, cfg, "mia", seed=1)
        d = rep.epochs[0].to_dict()
        assert "mia_beta" in d and "ai_beta_full" not in d and "ai_caveat" not in d
        assert not rep.ai_data_dependent
        assert "mia_beta" not in train(purchase_small, cfg, "none", seed=1).epochs[0].to_dict()

    def test_worst_case_trace_collapses_to_mia(self, purchase_small):
        cfg = TrainConfig(noise_multiplier=1.0, clip_norm=0.5, expected_batch=40, epochs=2)
        rep = train(purchase_small, cfg, "ai_full", seed=2)
        for e in rep.epochs:
            dp = DpSgdConfig(rep.sampling_rate, 1.0, 0.5, e.steps)
            assert ai_bound(dp, [1.0] * e.steps).nominal == pytest.approx(e.mia_beta, abs=1e-15)
            assert e.ai_beta_full >= e.mia_beta

    def test_divergence_aborts(self, purchase_small):
        cfg = TrainConfig(noise_multiplier=100.0, expected_batch=40, epochs=3, learning_rate=1e308)
        with np.errstate(over="ignore", invalid="ignore"):
            rep = train(purchase_small, cfg, "mia", seed=0)
        assert rep.aborted
        assert "non-finite" in rep.abort_reason
        assert len(rep.epochs) < 3

    def test_fixed_step_count_and_mlp(self, purchase_small):
        cfg = TrainConfig(model="mlp", hidden_width=4, noise_multiplier=1.0,
                          expected_batch=40, steps=7)
        rep = train(purchase_small, cfg, "ai_approx", seed=0)
        assert rep.epochs[-1].steps == 7
        assert "full" not in rep.traces

    def test_rejects_oversized_batch(self, tiny):
        with pytest.raises(ValueError):
            train(tiny, TrainConfig(expected_batch=6))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(model="cnn")
        with pytest.raises(ValueError):
            TrainConfig(noise_multiplier=-1)
        assert TrainConfig(learning_rate=1.0, lr_decay=1.0).lr_at(3) == 0.25


@pytest.fixture(scope="module")
def reports(tmp_path_factory):
    ds = encode_synthetic(tmp_path_factory.mktemp("cost"), *adult_like(n=5000, seed=1))
    cfg = TrainConfig(noise_multiplier=3.51, expected_batch=256, epochs=2, learning_rate=0.5)
    return {mode: train(ds, cfg, mode, seed=0) for mode in ("mia", "ai_full")}


class TestAnalysisCost:
    def test_mia_overhead_is_negligible(self, reports):
        rep = reports["mia"]
        train_s = sum(e.wall_time["train"] for e in rep.epochs)
        mia_s = sum(e.wall_time["mia"] for e in rep.epochs)
        assert mia_s < 0.01 * train_s

    def test_full_analysis_costs_more_than_approximate(self, reports):
        rep = reports["ai_full"]
        full = sum(e.wall_time["ai_full"] for e in rep.epochs)
        approx = sum(e.wall_time["ai_approx"] for e in rep.epochs)
        assert full > 5 * approx
