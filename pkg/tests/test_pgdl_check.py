"""Diagnostics from the static checker, one rule at a time."""

from steerlab.pgdl import Call, NodeDecl, Num, ParamDecl, Program, Ref, check, parse
from steerlab.pgdl.syntax import ActionDecl

from conftest import FIXTURES


def rules_of(src: str) -> list[tuple[str, str]]:
    result = parse(src)
    assert result.ok, result.diagnostics
    return [(d.severity, d.rule) for d in check(result.program)]


ACT = "\naction a = x clip(0.0, 1.0)"


def test_clean_program_is_silent():
    assert rules_of("obs x" + ACT) == []


def test_dup_name():
    assert ("error", "dup-name") in rules_of("obs x\nnode x = 1.0" + ACT)


def test_undeclared_and_use_before_decl():
    diags = check(parse("obs x\nnode n = y" + ACT).program)
    assert any(d.rule == "undeclared" and "not declared" in d.message for d in diags)
    diags = check(parse("obs x\nnode n = late\nnode late = x" + ACT).program)
    assert any(d.rule == "undeclared" and "before" in d.message for d in diags)


def test_action_read():
    src = "obs x\naction a = x clip(0.0, 1.0)\naction b = a clip(0.0, 1.0)"
    assert ("error", "action-read") in rules_of(src)


def test_no_actions():
    assert ("error", "no-actions") in [(d.severity, d.rule) for d in check(parse("obs x").program)]


def test_inert_policy_warning():
    src = "obs x\nparam p = 0.3\naction a = p clip(0.0, 1.0)"
    assert ("warning", "inert-policy") in rules_of(src)
    # reading any observation, even indirectly, clears it
    src = "obs x\nnode n = x\naction a = n clip(0.0, 1.0)\naction b = 0.0 clip(0.0, 1.0)"
    assert all(r != "inert-policy" for _, r in rules_of(src))


def test_arity():
    assert ("error", "arity") in rules_of("obs x\nnode n = relu(x, x)" + ACT)
    assert ("error", "arity") in rules_of("obs x\nnode n = min(x)" + ACT)
    assert ("error", "arity") in rules_of("obs x\nnode n = select(x, x)" + ACT)


def test_clamp_rules():
    assert ("error", "clamp-static") in rules_of("obs x\nnode n = clamp(x, x, 1.0)" + ACT)
    assert ("error", "clamp-order") in rules_of("obs x\nnode n = clamp(x, 1.0, -1.0)" + ACT)
    assert rules_of("obs x\nnode n = clamp(x, -1.0, 1.0)" + ACT) == []


def test_shape_rules():
    assert ("error", "shape") in rules_of("obs v[4]\nobs w[3]\nnode n = v + w" + "\nobs x" + ACT)
    assert ("error", "shape") in rules_of("obs x\nnode n = mean(x)" + ACT)
    assert ("error", "shape") in rules_of("obs v[4]\nobs x\nnode n = stack(v, x)" + ACT)
    # scalar against vector broadcasts fine
    assert rules_of("obs v[4]\nobs x\nnode n = mean(v * x)" + ACT) == []


def test_clip_order():
    assert ("error", "clip-order") in rules_of("obs x\naction a = x clip(1.0, -1.0)")
    assert ("error", "clip-order") in rules_of("obs x\naction a = x clip(0.5, 0.5)")


def test_clip_convention_warning():
    assert ("warning", "clip-convention") in rules_of("obs x\naction steer = x clip(0.0, 1.0)")
    assert ("warning", "clip-convention") in rules_of("obs x\naction brake = x clip(-1.0, 1.0)")
    assert rules_of("obs x\naction steer = x clip(-1.0, 1.0)") == []


def test_obs_size_for_known_names():
    assert ("error", "obs-size") in rules_of("obs tile_x[4]" + ACT.replace("x", "tile_x"))
    assert ("error", "obs-size") in rules_of("obs speed[3]\naction a = mean(speed) clip(0.0, 1.0)")
    assert rules_of("obs tile_x[8]\naction a = mean(tile_x) clip(0.0, 1.0)") == []


def test_param_bound_warning():
    assert ("warning", "param-bound") in rules_of("obs x\nparam big = 60.0" + ACT)
    assert rules_of("obs x\nparam big = 60.0 frozen" + ACT) == []
    assert rules_of("obs x\nparam small = 0.6" + ACT) == []


def test_number_range():
    result = parse("obs x\nparam p = 1e999" + ACT)
    assert any(d.rule == "number-range" for d in result.diagnostics)
    # programmatic trees are vetted too
    prog = Program((
        ParamDecl("p", float("inf")),
        NodeDecl("n", Num(float("nan"))),
        ActionDecl("a", Ref("n"), 0.0, 1.0),
    ))
    rules = [d.rule for d in check(prog)]
    assert rules.count("number-range") == 2


def test_unknown_operator_on_programmatic_tree():
    prog = Program((
        NodeDecl("n", Call("sigmoid", (Num(1.0),))),
        ActionDecl("a", Ref("n"), 0.0, 1.0),
    ))
    assert any(d.rule == "unknown-operator" for d in check(prog))


def test_node_budget_floor():
    lines = ["obs x"]
    for i in range(300):
        lines.append(f"node n{i} = relu(x)")
    lines.append("action a = n0 clip(0.0, 1.0)")
    assert ("error", "node-budget") in rules_of("\n".join(lines))


def test_fixture_diagnostics():
    ctrl = (FIXTURES / "pgdl" / "cruise_controller.pgdl").read_text()
    diags = check(parse(ctrl).program)
    assert [(d.severity, d.rule) for d in diags] == [("warning", "param-bound")]

    recov = (FIXTURES / "pgdl" / "cruise_recovery.pgdl").read_text()
    assert check(parse(recov).program) == []
