import pytest

from tsa_aqa import lexicon
from tsa_aqa.lexicon import (
    MalformedCodeError,
    Phase,
    TooFewBoundariesError,
    UnknownCodeError,
    canonical_transitions,
    parse_dive_code,
    step_count,
)


def names(code):
    return [s.name for s in parse_dive_code(code)]


def test_table_has_52_codes():
    assert len(lexicon.all_codes()) == 52


@pytest.mark.parametrize(
    "code,expected",
    [
        ("101B", ["Forward", "0.5 Som.Pike", "Entry"]),
        ("5152B", ["Forward", "2.5 Soms.Pike", "1 Twist", "2.5 Soms.Pike", "Entry"]),
        ("6241B", ["Arm.Back", "0.5 Twist", "2 Soms.Pike", "Entry"]),
        ("307C", ["Reverse", "3.5 Soms.Tuck", "Entry"]),
        ("5255B", ["Back", "2.5 Twists", "2.5 Soms.Pike", "Entry"]),
    ],
)
def test_parse_known_codes(code, expected):
    assert names(code) == expected


@pytest.mark.parametrize("code,n", [("307C", 3), ("6241B", 4), ("5152B", 5)])
def test_step_count(code, n):
    assert step_count(code) == n


def test_step_count_distribution():
    counts = {3: 0, 4: 0, 5: 0}
    for code in lexicon.all_codes():
        counts[step_count(code)] += 1
    assert counts == {3: 31, 4: 16, 5: 5}


def test_sequence_invariants():
    for code in lexicon.all_codes():
        seq = parse_dive_code(code)
        assert seq[0].phase is Phase.TAKE_OFF
        assert seq[-1].phase is Phase.ENTRY
        assert all(s.phase is Phase.FLIGHT for s in seq[1:-1])
        for a, b in zip(seq, seq[1:]):
            assert a.name != b.name
        assert all(s.half_turns >= 0 for s in seq)


def test_half_turns_are_exact_integers():
    seq = parse_dive_code("5255B")
    assert [s.half_turns for s in seq] == [0, 5, 5, 0]
    seq = parse_dive_code("6142D")
    assert [s.half_turns for s in seq] == [0, 2, 4, 0]


@pytest.mark.parametrize("bad", ["", "10B", "901B", "101E", "1234B", "101b", "51522B"])
def test_malformed_codes(bad):
    with pytest.raises(MalformedCodeError):
        parse_dive_code(bad)


def test_unknown_code():
    with pytest.raises(UnknownCodeError):
        parse_dive_code("102B")


def test_canonical_transitions():
    assert canonical_transitions([18943, 18957, 18967, 18978]) == (18943, 18978)
    assert canonical_transitions([10, 40]) == (10, 40)
    with pytest.raises(TooFewBoundariesError):
        canonical_transitions([5])
    with pytest.raises(TooFewBoundariesError):
        canonical_transitions([40, 10])


def test_canonical_transitions_always_increasing_pair():
    for code in lexicon.all_codes():
        n = step_count(code) - 1
        bounds = [10 * (i + 1) for i in range(n)]
        if n >= 2:
            t1, t2 = canonical_transitions(bounds)
            assert t1 < t2


def test_table_round_trip(tmp_path):
    path = tmp_path / "lexicon.json"
    lexicon.export_table(path)
    table = lexicon.import_table(path)
    assert set(table) == set(lexicon.all_codes())
    for code, steps in table.items():
        assert steps == parse_dive_code(code)


def test_register_extends_lexicon():
    from tsa_aqa.lexicon import SubActionLabel

    code = "113B"
    assert code not in lexicon.all_codes()
    steps = (
        SubActionLabel(Phase.TAKE_OFF, "Forward", 0),
        SubActionLabel(Phase.FLIGHT, "6.5 Soms.Pike", 13),
        SubActionLabel(Phase.ENTRY, "Entry", 0),
    )
    lexicon.register({code: steps})
    try:
        assert parse_dive_code(code) == steps
        assert step_count(code) == 3
    finally:
        lexicon._SEQUENCES.pop(code)
    with pytest.raises(lexicon.LexiconError):
        lexicon.register({
            "115B": (
                SubActionLabel(Phase.TAKE_OFF, "Forward", 0),
                SubActionLabel(Phase.FLIGHT, "Forward", 0),  # adjacent duplicate
                SubActionLabel(Phase.ENTRY, "Entry", 0),
            )
        })
