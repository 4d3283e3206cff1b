import os

from poiseuille_lc.runs import RunRegistry


def test_ids_follow_registration_order(tmp_path):
    registry = RunRegistry()
    first = registry.register({"horizon": 0.1}, str(tmp_path))
    second = registry.register({"horizon": 0.2}, str(tmp_path))
    assert (first, second) == ("run-000", "run-001")
    assert registry.get_run(second)["output_dir"] == os.path.join(str(tmp_path), "run-001")
    assert registry.list_runs() == {"run-000": "pending", "run-001": "pending"}


def test_update_status():
    registry = RunRegistry()
    run_id = registry.register({"mode": "coupled"}, "sweep")
    assert registry.update_status(run_id, "done", {"pass": True})
    assert registry.get_run(run_id)["metrics"] == {"pass": True}
    assert not registry.update_status("run-999", "failed", error="boom")
    assert registry.get_run("run-999") is None


def test_index_rows():
    registry = RunRegistry()
    ok = registry.register({"horizon": 0.1}, "sweep")
    bad = registry.register({"horizon": 0.2}, "sweep")
    registry.update_status(ok, "done", {"pass": True})
    registry.update_status(bad, "failed", error="SolverError in coupling: boom")
    rows = registry.index_rows()
    assert [row["run_id"] for row in rows] == ["run-000", "run-001"]
    assert rows[0]["horizon"] == 0.1 and rows[0]["pass"] is True and rows[0]["error"] == ""
    assert rows[1]["status"] == "failed"
    assert rows[1]["error"].startswith("SolverError")
