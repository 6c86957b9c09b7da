"""Smoke test for the `tschain` extension module.

Build and install first, e.g.::

    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/tschain-*.whl
    python python/smoke_test.py
"""

import math
import os
import tempfile

import tschain


def check_filters():
    got = tschain.p_filter([0.5, 0.3, 0.2], 2)
    assert all(math.isclose(a, b, abs_tol=1e-12) for a, b in zip(got, [0.625, 0.375, 0.0]))
    assert tschain.p_filter([0.4, 0.4, 0.2], 1) == [1.0, 0.0, 0.0]
    labels = [(1, [0.9, 0.1]), (2, [0.8, 0.2]), (3, [0.3, 0.7])]
    assert tschain.k_filter(labels, 1) == [1, 3]
    assert tschain.k_filter(labels) == [1, 2, 3]
    assert tschain.select_best([0.90, 0.92, 0.91]) == 1
    assert tschain.select_best([0.9, 0.9, 0.9]) == 0
    n, mean, std, lo, hi = tschain.summarize([0.8, 1.0])
    assert n == 2 and math.isclose(mean, 0.9) and math.isclose(std, math.sqrt(0.02))


def check_model(tmp):
    m = tschain.Model(3, [4], 2, seed=1)
    assert m.arch == (3, [4], 2) and m.num_params == 3 * 4 + 4 + 4 * 2 + 2
    probs = m.forward([[0.1, -0.2, 0.3]])
    assert math.isclose(sum(probs[0]), 1.0)

    zero = tschain.Model(2, [], 9, seed=0)
    grads = zero.gradient([[0.0, 0.0]], [[1.0] + [0.0] * 8])
    assert len(grads) == 1 and len(grads[0]) == 2 * 9 + 9

    path = os.path.join(tmp, "model.json")
    m.save(path)
    back = tschain.Model.load(path)
    assert back.seed == 1
    assert back.forward([[0.1, -0.2, 0.3]]) == probs


def check_pipeline(tmp):
    train, val, test = tschain.generate_synthetic(classes=3, per_class=60, dim=3, spread=0.4, seed=2)
    assert (len(train), len(val), len(test)) == (144, 18, 18)
    path = os.path.join(tmp, "train.csv")
    train.write_csv(path)
    assert tschain.DataTable.read_csv(path).features == train.features

    split = tschain.make_splits(train, 0.2, early_stop_fraction=0.1, seed=3)
    seed, total, labelled, early, pool = split.audit
    assert labelled + early + pool == total == 144
    assert all(label is None for label in split.pool.labels)
    split, (val, test) = split.normalized([val, test])

    quick = dict(learning_rate=0.01, batch_size=8, steps_per_epoch=10, max_epochs=10, patience=3)
    model, curve = tschain.train_model(split.labelled, split.early_stop, hidden=[8], seed=5, **quick)
    assert 1 <= len(curve) <= 10
    accuracy, confusion = model.evaluate(test)
    assert 0.0 <= accuracy <= 1.0 and sum(map(sum, confusion)) == len(test)

    records, best = tschain.run_chain(split, val, test, hidden=[8], iterations=2, k="80%", seed=5, **quick)
    assert [r.iteration for r in records] == [0, 1, 2]
    assert records[0].pseudo_agreement is None and records[1].pseudo_count > 0
    assert records[best].val_accuracy >= records[0].val_accuracy
    # The teacher is exactly the supervised model trained with the same seed.
    assert records[0].test_accuracy == accuracy


def check_experiment(tmp):
    out = os.path.join(tmp, "exp")
    config = f"""
        data.classes = 3
        data.per_class = 60
        data.dim = 3
        split.fractions = 0.2, 1.0
        split.early_stop_fraction = 0.1
        runs = 2
        arch.hidden = 4
        train.steps_per_epoch = 5
        train.max_epochs = 3
        chain.iterations = 1
        out = {out}
    """
    rows = tschain.run_experiment(config)
    assert os.path.exists(os.path.join(out, "summary.csv"))
    chain_full = [r for r in rows if r[0] == 1.0 and r[1] == "chain"]
    assert chain_full and all(r[3] == 0 for r in chain_full)
    try:
        tschain.run_experiment("runs = 0")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config accepted")


def main():
    with tempfile.TemporaryDirectory() as tmp:
        check_filters()
        check_model(tmp)
        check_pipeline(tmp)
        check_experiment(tmp)
    print("tschain smoke test passed")


if __name__ == "__main__":
    main()
