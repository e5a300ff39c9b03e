import numpy as np
import pytest

from harkit.data import Dataset, VideoSample, decode_image
from harkit.errors import DimensionError, UsageError
from harkit.evaluation import (build_report, evaluate, heatmap_pixels, predict_video, read_matrix_csv,
                               render_heatmap, row_normalize, write_confusion_csv, write_report_csv)
from harkit.models import build_convlstm, build_single_frame_cnn
from harkit.tensor import make_rng

SIZE = 16


@pytest.fixture(scope="module")
def cnn():
    return build_single_frame_cnn(3, seq_len=6, seed=2, frame_size=SIZE)


def _sample(rng, t=6, label=0, source="v"):
    return VideoSample(rng.random((t, SIZE, SIZE, 3)), label, f"c{label}", source)


def _toy_set(rng, n=12):
    samples = [_sample(rng, label=i % 3, source=f"c{i % 3}/v{i:02d}") for i in range(n)]
    return Dataset(samples, ["c0", "c1", "c2"])


@pytest.mark.parametrize("seed", range(5))
def test_video_prediction_is_mean_of_frame_predictions(cnn, seed):
    rng = make_rng(seed)
    s = _sample(rng)
    per_frame = np.stack([cnn.forward(f[None])[0][0] for f in s.frames])
    np.testing.assert_allclose(predict_video(cnn, s), per_frame.mean(axis=0), rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_video_prediction_is_frame_order_invariant(cnn, seed):
    rng = make_rng(seed)
    s = _sample(rng)
    perm = rng.permutation(len(s.frames))
    shuffled = VideoSample(s.frames[perm], s.label, s.class_name, s.source)
    np.testing.assert_allclose(predict_video(cnn, s), predict_video(cnn, shuffled), rtol=0, atol=1e-12)


def test_confusion_additivity_over_disjoint_subsets(cnn):
    rng = make_rng(0)
    ds = _toy_set(rng, 15)
    full = evaluate(cnn, ds).confusion
    for seed in range(3):
        order = make_rng(seed).permutation(len(ds))
        cuts = sorted(make_rng(seed + 10).choice(np.arange(1, len(ds)), size=2, replace=False))
        parts = np.split(order, cuts)
        total = sum(evaluate(cnn, ds.subset(sorted(p))).confusion for p in parts)
        assert np.array_equal(total, full)
    assert full.sum() == len(ds)


def test_report_fields(cnn):
    ds = _toy_set(make_rng(1), 9)
    rep = evaluate(cnn, ds)
    assert rep.accuracy == np.trace(rep.confusion) / 9
    assert [p.source for p in rep.per_video] == sorted(s.source for s in ds.samples)
    rows = rep.row_normalized.sum(axis=1)
    np.testing.assert_allclose(rows[rep.confusion.sum(axis=1) > 0], 1.0)


def test_evaluate_rejects_empty_and_mismatch(cnn):
    with pytest.raises(UsageError):
        evaluate(cnn, Dataset([], ["a", "b", "c"]))
    two = Dataset([_sample(make_rng(0))], ["c0", "c1"])
    with pytest.raises(UsageError):
        evaluate(cnn, two)


def test_convlstm_prediction_checks_length():
    m = build_convlstm(2, seq_len=3, seed=0, frame_size=SIZE)
    rng = make_rng(0)
    p = predict_video(m, _sample(rng, t=3))
    assert p.shape == (2,) and abs(p.sum() - 1) < 1e-12
    with pytest.raises(DimensionError):
        predict_video(m, _sample(rng, t=4))


def test_row_normalize_zero_rows():
    m = row_normalize(np.array([[2, 2], [0, 0]]))
    assert m.tolist() == [[0.5, 0.5], [0.0, 0.0]]


def test_heatmap_two_by_two(tmp_path):
    matrix = np.array([[1.0, 0.0], [0.25, 0.75]])
    render_heatmap(matrix, ["a", "b"], tmp_path / "h.csv", tmp_path / "h.pgm")
    img = decode_image((tmp_path / "h.pgm").read_bytes())
    assert (img.width, img.height) == (64, 64)
    px = img.pixels[..., 0]
    assert np.all(px[:32, :32] == 255) and np.all(px[:32, 32:] == 0)
    assert np.all(px[32:, :32] == 64) and np.all(px[32:, 32:] == 191)
    names, back = read_matrix_csv(tmp_path / "h.csv")
    assert names == ["a", "b"] and np.array_equal(back, matrix)
    assert (tmp_path / "h.csv").read_text().splitlines()[2] == "b,0.250000,0.750000"


def test_heatmap_rejects_bad_matrix():
    with pytest.raises(DimensionError):
        heatmap_pixels(np.ones((2, 3)) / 3)
    with pytest.raises(DimensionError):
        heatmap_pixels(np.array([[1.5, 0], [0, 1]]))


def test_confusion_and_report_csv(cnn, tmp_path):
    rep = evaluate(cnn, _toy_set(make_rng(2), 6))
    write_confusion_csv(rep.confusion, rep.class_names, tmp_path / "c.csv")
    names, back = read_matrix_csv(tmp_path / "c.csv")
    assert names == rep.class_names and np.array_equal(back, rep.confusion)
    write_report_csv(rep, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("source,true,predicted,p_c0") and len(lines) == 6 + 2


def test_build_report_counts():
    from harkit.evaluation import VideoPrediction
    preds = [VideoPrediction("a", 0, 0, np.array([1.0, 0])), VideoPrediction("b", 0, 1, np.array([0, 1.0])),
             VideoPrediction("c", 1, 1, np.array([0, 1.0]))]
    rep = build_report(preds, ["x", "y"])
    assert rep.confusion.tolist() == [[1, 1], [0, 1]] and rep.accuracy == 2 / 3
