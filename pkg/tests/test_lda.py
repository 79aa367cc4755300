import json

import numpy as np
import pytest
from scipy import stats
from sklearn.base import clone
from sklearn.discriminant_analysis import LinearDiscriminantAnalysis
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from oracles import gaussian_classes
from prismfp import lda as lda_api
from prismfp.exceptions import DegenerateClass, DimensionMismatch, SingularScatter
from prismfp.lda import LdaAttributor


@pytest.fixture
def two_clouds(rng):
    X, y = gaussian_classes(rng, [[0, 0], [10, 10]], 200)
    Xt, yt = gaussian_classes(rng, [[0, 0], [10, 10]], 200)
    return X, y, Xt, yt


def test_two_cloud_fixture_is_nearly_separable():
    # Bayes error with equal priors: half the centre distance, in sigmas
    bayes = stats.norm.sf(np.hypot(10, 10) / 2)
    assert bayes < 1e-9


def test_two_clouds_train_and_holdout(two_clouds):
    X, y, Xt, yt = two_clouds
    model = LdaAttributor().fit(X, y)
    assert np.mean(model.predict(X) == y) >= 0.999
    assert np.mean(model.predict(Xt) == yt) >= 0.99


def test_six_classes_give_five_components(rng):
    X, y = gaussian_classes(rng, rng.normal(0, 5, (6, 10)), 30)
    model = LdaAttributor().fit(X, y)
    assert model.scalings_.shape == (10, 5)
    assert model.transform(X).shape == (180, 5)


def test_duplicated_samples_need_regularisation():
    X = np.repeat([[0.0, 1.0, 2.0], [3.0, 1.0, 0.0]], 4, axis=0)
    y = np.repeat(["a", "b"], 4)
    model = LdaAttributor(reg=0.5).fit(X, y)
    assert list(model.predict(X)) == list(y)
    assert np.all(np.linalg.eigvalsh(model.covariance_) > 0)
    LdaAttributor().fit(X, y)
    with pytest.raises(SingularScatter):
        LdaAttributor(reg=0).fit(X, y)


def test_degenerate_classes(rng):
    X = rng.normal(size=(5, 3))
    with pytest.raises(DegenerateClass):
        LdaAttributor().fit(X, ["a"] * 5)
    with pytest.raises(DegenerateClass):
        LdaAttributor().fit(X, ["a", "a", "a", "a", "b"])


def test_class_mean_predicts_its_class(rng):
    X, y = gaussian_classes(rng, [[0, 0, 0], [4, 0, 1], [0, 5, 2]], 50)
    model = LdaAttributor().fit(X, y)
    for k, label in enumerate(model.classes_):
        raw_mean = model.means_[k] * model.scale_ + model.offset_
        assert model.predict(raw_mean[None])[0] == label


def test_exact_tie_goes_to_first_label(rng):
    A = rng.normal(size=(40, 3)) + [2, 0, 1]
    X = np.vstack([A, -A])
    y = np.repeat(["zeta", "alpha"], 40)
    model = LdaAttributor(reg=0).fit(X, y)
    midpoint = np.zeros((1, 3))
    scores = model.decision_function(midpoint)[0]
    assert abs(scores[0] - scores[1]) < 1e-12
    assert model.predict(midpoint)[0] == "alpha"


def test_transform_two_classes(two_clouds):
    X, y, _, _ = two_clouds
    model = LdaAttributor().fit(X, y)
    assert model.transform(X[:3]).shape == (3, 1)
    centres = np.array([X[y == c].mean(axis=0) for c in model.classes_])
    emb = model.transform(centres)[:, 0]
    assert abs(emb[0] - emb[1]) > 5
    assert np.all(model.transform(model.offset_[None]) == 0)


def test_posteriors_are_distributions(rng):
    X, y = gaussian_classes(rng, rng.normal(0, 2, (4, 6)), 40)
    proba = LdaAttributor().fit(X, y).predict_proba(rng.normal(0, 5, (100, 6)))
    assert np.all((proba >= 0) & (proba <= 1))
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)


def test_projection_is_within_scatter_orthonormal(rng):
    X, y = gaussian_classes(rng, rng.normal(0, 3, (5, 7)), 60)
    model = LdaAttributor(reg=0).fit(X, y)
    Z = (X - model.offset_) / model.scale_
    classes, idx = np.unique(y, return_inverse=True)
    centred = Z - np.array([Z[y == c].mean(axis=0) for c in classes])[idx]
    s_w = centred.T @ centred
    gram = model.scalings_.T @ s_w @ model.scalings_
    # orthogonal, and normalised to unit variance under the shared covariance s_w / n
    np.testing.assert_allclose(gram / len(X), np.eye(4), atol=1e-8)


def test_points_on_boundary_score_equal(rng):
    X, y = gaussian_classes(rng, [[0, 0, 0, 0], [3, 1, 0, 2]], 100)
    model = LdaAttributor(reg=0).fit(X, y)
    w = model.coef_[0] - model.coef_[1]
    mid = model.means_.mean(axis=0)
    for _ in range(20):
        z = rng.normal(size=4) * 3
        z = mid + z - (w @ z) / (w @ w) * w
        scores = model.decision_function((z * model.scale_ + model.offset_)[None])[0]
        assert abs(scores[0] - scores[1]) < 1e-8


def test_affine_invariance(rng, two_clouds):
    X, y, Xt, _ = two_clouds
    base = LdaAttributor(reg=0).fit(X, y).predict(Xt)
    for _ in range(5):
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
        A = q @ np.diag(rng.uniform(0.5, 2, 2))
        b = rng.normal(0, 10, 2)
        pred = LdaAttributor(reg=0).fit(X @ A.T + b, y).predict(Xt @ A.T + b)
        np.testing.assert_array_equal(pred, base)


def test_agrees_with_sklearn_reference(rng):
    X, y = gaussian_classes(rng, rng.normal(0, 1.5, (4, 5)), 80)
    Xt = rng.normal(0, 2, (300, 5))
    ours = LdaAttributor(reg=0).fit(X, y)
    ref = LinearDiscriminantAnalysis(solver="lsqr").fit(X, y)
    np.testing.assert_array_equal(ours.predict(Xt), ref.predict(Xt))
    np.testing.assert_allclose(ours.predict_proba(Xt), ref.predict_proba(Xt), atol=1e-9)
    # same discriminant subspace as the reference eigen solver
    ref_eig = make_pipeline(StandardScaler(), LinearDiscriminantAnalysis(solver="eigen")).fit(X, y)
    a, b = ours.transform(Xt), ref_eig.transform(Xt)
    coef, *_ = np.linalg.lstsq(np.c_[a, np.ones(len(a))], b, rcond=None)
    np.testing.assert_allclose(np.c_[a, np.ones(len(a))] @ coef, b, atol=1e-8)


def test_deterministic_fit(rng):
    X, y = gaussian_classes(rng, rng.normal(0, 1, (3, 12)), 30)
    a = json.dumps(LdaAttributor().fit(X, y).to_dict())
    b = json.dumps(LdaAttributor().fit(X, y).to_dict())
    assert a == b


def test_subset_selection(rng):
    n_r = 4
    X = rng.normal(size=(90, 6 * n_r))
    y = np.repeat(["a", "b", "c"], 30)
    mag = LdaAttributor(subset="magnitude").fit(X, y)
    assert len(mag.feature_indices_) == 3 * n_r
    assert mag.means_.shape == (3, 3 * n_r)
    ph = LdaAttributor(subset="phase", n_r=n_r).fit(X, y)
    assert set(ph.feature_indices_).isdisjoint(mag.feature_indices_)
    assert ph.predict(X[:2]).shape == (2,)
    with pytest.raises(DimensionMismatch):
        ph.predict(X[:, :-6])


def test_minmax_normalization(rng):
    X, y = gaussian_classes(rng, [[0, 0], [8, 8]], 60)
    model = LdaAttributor(normalization="minmax").fit(X, y)
    assert np.mean(model.predict(X) == y) > 0.99
    with pytest.raises(ValueError):
        LdaAttributor(normalization="bogus").fit(X, y)


def test_save_load_save_is_byte_identical(tmp_path, rng):
    X, y = gaussian_classes(rng, rng.normal(0, 2, (3, 12)), 30)
    model = LdaAttributor(subset="magnitude").fit(X, y)
    model.save(tmp_path / "a.json")
    loaded = LdaAttributor.load(tmp_path / "a.json")
    loaded.save(tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    np.testing.assert_array_equal(loaded.predict(X), model.predict(X))
    np.testing.assert_array_equal(loaded.predict_proba(X), model.predict_proba(X))
    data = json.loads((tmp_path / "a.json").read_text())
    for key in ("vocabulary", "standardizer", "projection", "class_means",
                "covariance_cholesky", "priors", "format_version"):
        assert key in data
    assert data["params"]["subset"] == "magnitude"


def test_tampered_model_rejected(tmp_path, rng):
    X, y = gaussian_classes(rng, rng.normal(0, 2, (3, 12)), 30)
    LdaAttributor(subset="magnitude").fit(X, y).save(tmp_path / "m.json")
    data = json.loads((tmp_path / "m.json").read_text())
    data["feature_indices"] = list(range(12))
    with pytest.raises(DimensionMismatch):
        LdaAttributor.from_dict(data)


def test_functional_wrappers(two_clouds):
    X, y, _, _ = two_clouds
    model = lda_api.fit(X, y)
    label, post = lda_api.predict(model, X[0])
    assert label == y[0] and post.shape == (2,)
    assert lda_api.transform(model, X[0]).shape == (1,)


def test_sklearn_composition(rng):
    X, y = gaussian_classes(rng, rng.normal(0, 3, (3, 4)), 40)
    est = LdaAttributor(reg=1e-3)
    assert clone(est).get_params() == est.get_params()
    assert est.set_params(subset="all") is est
    scores = cross_val_score(make_pipeline(StandardScaler(), est), X, y, cv=4)
    assert scores.mean() > 0.8
