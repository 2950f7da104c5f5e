"""Smoke test for the dpcount extension module."""

import dpcount

DOCS = ["abracadabra", "abba", "cadabra", "barbara", "banana", "cabana"]


def naive(pattern, cap):
    total = 0
    for d in DOCS:
        hits = sum(d.startswith(pattern, i) for i in range(len(d)))
        total += min(hits, cap)
    return total


def main():
    db = dpcount.Database(DOCS, max_len=12)
    assert (db.n, db.ell, len(db)) == (6, 12, 6), repr(db)
    assert db.count("abra", 12) == naive("abra", 12)

    exact = dpcount.build_trie(db, zero_noise=True, seed=1)
    for p in ["a", "ab", "abra", "bar", "ana", "zz", "cadabra"]:
        assert exact.query(p) == naive(p, 12), p
    mined = exact.mine(3.0)
    assert mined and all(c >= 3.0 for _, c in mined)
    assert [c for _, c in mined] == sorted((c for _, c in mined), reverse=True)

    trie = dpcount.build_trie(db, epsilon=1.0, seed=7)
    meta = trie.metadata
    assert meta["mode"] == "pure" and meta["seed"] == 7 and meta["alpha_total"] > 0
    again = dpcount.CountTrie.from_bytes(trie.to_bytes())
    assert again.query("abra") == trie.query("abra")
    same = dpcount.build_trie(db, epsilon=1.0, seed=7)
    assert same.to_bytes() == trie.to_bytes()

    blob = bytearray(trie.to_bytes())
    blob[len(blob) // 2] ^= 1
    try:
        dpcount.CountTrie.from_bytes(bytes(blob))
        raise AssertionError("corrupt bytes accepted")
    except dpcount.ChecksumError:
        pass

    try:
        dpcount.build_trie(db, epsilon=3.0, delta=1e-6, cap=1, seed=1)
        raise AssertionError("gaussian stage at epsilon 1 accepted")
    except dpcount.DpcountError:
        pass
    approx = dpcount.build_trie(db, epsilon=0.9, delta=1e-6, cap=1, seed=3)
    assert approx.metadata["mode"] == "approx"

    tiny = dpcount.Database(["a"], max_len=1, alphabet=64)
    try:
        dpcount.build_trie(tiny, seed=1, candidate_threshold=-1e12)
        raise AssertionError("size abort not raised")
    except dpcount.SizeAbortError as e:
        level, size, limit = e.args
        assert level == 0 and size > limit

    grams = dpcount.build_qgram_table(db, 3, zero_noise=True, seed=1)
    assert grams.q == 3
    for p in ["abr", "ana", "bar", "zzz"]:
        assert grams.query(p) == naive(p, 12), p
    noisy = dpcount.build_qgram_table(db, 2, seed=5)
    assert dpcount.QGramTable.from_bytes(noisy.to_bytes()).mine(0.0) == noisy.mine(0.0)

    parents = [None, 0, 0, 1, 1, 2]
    counts = dpcount.colored_counts(parents, [(3, 1), (4, 1), (4, 2), (5, 3)])
    assert counts == [3, 2, 1, 1, 2, 1], counts
    est = dpcount.tree_counts(parents, counts, d=2, zero_noise=True, seed=1)
    assert est.values == [float(c) for c in counts] and est.mode == "pure"
    noisy_tree = dpcount.tree_counts(parents, counts, d=2, epsilon=0.9, delta=1e-6, seed=2)
    assert noisy_tree.mode == "approx" and noisy_tree.bound > 0

    print("smoke test passed")


if __name__ == "__main__":
    main()
