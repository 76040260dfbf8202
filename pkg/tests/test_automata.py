import pytest

from tillst import syntax as s
from tillst import temporal as t
from tillst.automata import (ACCEPT, AutomatonError, builtin_bme680,
                             automaton_transitions, load_automata,
                             parse_action_template)
from tillst.parser import parse_program


class TestBuiltinSensor:
    def test_shape(self):
        b = builtin_bme680()
        assert len(b.transitions) == 7
        assert set(b.states) == {"S0", "S1", "S2", "S3", "S4", "S5", ACCEPT}
        assert b.initial == "S0"

    def test_configuration_choices(self):
        b = builtin_bme680()
        got = {(tr.template.render(), tr.dst)
               for tr in automaton_transitions(b, "S0", 0, 12)}
        assert got == {("?L", "S1"), ("?R", "S2")}

    def test_gas_guard_released_at_thirty(self):
        b = builtin_bme680()
        assert automaton_transitions(b, "S4", 0, 29) == []
        (tr,) = automaton_transitions(b, "S4", 0, 30)
        assert tr.template.extern == "read_gas" and tr.dst == "S5"

    def test_cooldown_guard(self):
        b = builtin_bme680()
        assert automaton_transitions(b, "S5", 30, 49) == []
        (tr,) = automaton_transitions(b, "S5", 30, 50)
        assert tr.dst == ACCEPT

    def test_accept_is_terminal(self):
        assert automaton_transitions(builtin_bme680(), ACCEPT, 0, 10**6) == []

    def test_guard_monotone_in_time(self):
        b = builtin_bme680()
        for state in ("S0", "S2", "S4", "S5"):
            for entry in (0, 7):
                enabled_at = [bool(automaton_transitions(b, state, entry, now))
                              for now in range(entry, entry + 60)]
                # once enabled, stays enabled while the state is unchanged
                assert enabled_at == sorted(enabled_at)


class TestLoadAutomata:
    def test_surface_bme680_matches_builtin(self, load_corpus):
        prog = load_corpus("smart_home.tsl")
        loaded = load_automata(prog)["bme680"]
        built = builtin_bme680()
        assert set(loaded.states) == set(built.states)
        assert loaded.initial == built.initial
        assert set(loaded.transitions) == set(built.transitions)

    def test_unknown_target_state(self):
        prog = parse_program("automaton a { state S0 init; S0 --[!cls]--> S9; }")
        with pytest.raises(AutomatonError):
            load_automata(prog)

    def test_undeclared_extern(self):
        prog = parse_program(
            "automaton a { state S0 init; S0 --[!val(ghost)]--> accept; }")
        with pytest.raises(AutomatonError):
            load_automata(prog)

    def test_empty_section(self):
        assert load_automata(parse_program("")) == {}


class TestActionTemplates:
    @pytest.mark.parametrize("text,kind,direction", [
        ("?L", "label", "recv"), ("!R", "label", "send"),
        ("?cls", "close", "recv"), ("!cls", "close", "send"),
        ("?chan", "chan", "recv"), ("!chan", "chan", "send"),
        ("?val", "value", "recv"),
    ])
    def test_parse(self, text, kind, direction):
        tm = parse_action_template(text)
        assert (tm.kind, tm.direction) == (kind, direction)
        assert tm.render() == text

    def test_value_send_needs_extern(self):
        tm = parse_action_template("!val(read_gas)")
        assert tm.extern == "read_gas"
        with pytest.raises(AutomatonError):
            parse_action_template("!val")

    def test_garbage(self):
        with pytest.raises(AutomatonError):
            parse_action_template("~zap")
