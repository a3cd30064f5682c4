import batteries


def test_exterior_derivative_squares_to_zero():
    n, worst = batteries.d_squared()
    assert n == 1000 and worst <= 1e-9


def test_graded_leibniz_rule():
    n, worst = batteries.graded_leibniz()
    assert n == 1000 and worst <= 1e-9


def test_vector_field_bracket_jacobi():
    n, worst = batteries.field_jacobi()
    assert n == 1000 and worst <= 1e-9


def test_algebroid_differential_squares_to_zero():
    n, worst = batteries.algebroid_d_squared()
    assert n == 1000 and worst <= 1e-9


def test_invariant_chain_ranks_are_monotone():
    n, bad = batteries.chain_rank_monotone()
    assert n == 1000 and bad == 0


def test_normalization_is_idempotent():
    n, bad = batteries.normalization_idempotent()
    assert n == 1000 and bad == 0
