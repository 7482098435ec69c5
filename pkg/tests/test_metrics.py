import numpy as np
import pytest
from sklearn import metrics as skm

from netdiag.exceptions import LengthMismatch, UnknownLabel
from netdiag.metrics import Metrics, confusion_matrix, evaluate

CLASSES = ("Bad", "OK", "Good")


def test_against_sklearn():
    rng = np.random.default_rng(0)
    y_true = rng.choice(CLASSES, 300)
    y_pred = np.where(rng.random(300) < 0.7, y_true, rng.choice(CLASSES, 300))
    m = evaluate(y_true, y_pred, CLASSES)
    assert (m.confusion == skm.confusion_matrix(y_true, y_pred, labels=list(CLASSES))).all()
    assert m.accuracy == pytest.approx(skm.accuracy_score(y_true, y_pred))
    p, r, f, _ = skm.precision_recall_fscore_support(y_true, y_pred, labels=list(CLASSES),
                                                     zero_division=0)
    assert [m.precision[c] for c in CLASSES] == pytest.approx(p.tolist())
    assert [m.recall[c] for c in CLASSES] == pytest.approx(r.tolist())
    assert [m.f1[c] for c in CLASSES] == pytest.approx(f.tolist())
    assert m.macro_f1 == pytest.approx(f.mean())


def test_recall_times_support_is_trace():
    cm = np.array([[105, 43, 2], [29, 1096, 70], [0, 66, 83]])
    m = Metrics.from_confusion(cm, CLASSES)
    total = sum(m.recall[c] * cm[i].sum() for i, c in enumerate(CLASSES))
    assert total == pytest.approx(np.trace(cm))
    assert m.n_correct == 1284 and m.n_samples == 1494


def test_empty_class_gives_zero():
    m = evaluate(["OK", "OK"], ["OK", "Bad"], CLASSES)
    assert m.precision["Good"] == 0.0 and m.recall["Good"] == 0.0
    assert m.precision["Bad"] == 0.0


def test_errors():
    with pytest.raises(LengthMismatch):
        confusion_matrix(["OK"], [], CLASSES)
    with pytest.raises(UnknownLabel):
        confusion_matrix(["OK"], ["Meh"], CLASSES)


def test_to_dict():
    d = evaluate(["OK", "Bad"], ["OK", "OK"], CLASSES).to_dict()
    assert d["averaging"] == "macro"
    assert d["confusion"] == [[0, 1, 0], [0, 1, 0], [0, 0, 0]]
