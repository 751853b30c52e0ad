from pairgate import threatsim
from pairgate.threatsim import GatewayInstance, Outcome, ScenarioId


def run_one(scenario_id, sabotage=frozenset()):
    instance = GatewayInstance(sabotage=sabotage)
    try:
        return threatsim.run_scenario(scenario_id, instance)
    finally:
        instance.close()


class TestScenarios:
    def test_excessive_privilege_is_prevented(self):
        result = run_one(ScenarioId.EXCESSIVE_PRIVILEGE)
        assert result.outcome is Outcome.PREVENTED
        assert result.transcript      # transcript carries the evidence

    def test_weak_audit_breaches_when_read_logging_is_cut(self):
        result = run_one(ScenarioId.WEAK_AUDIT,
                         sabotage=frozenset({"unlogged_reads"}))
        assert result.outcome is Outcome.BREACHED

    def test_scenario_order_is_stable(self):
        assert [s.value for s in threatsim.SCENARIO_ORDER] == [
            "excessive_privilege", "privilege_abuse", "privilege_elevation",
            "platform_vulnerability", "sql_injection", "weak_audit",
            "weak_authentication", "backup_exposure"]

    def test_every_scenario_names_a_sabotage_flag(self):
        assert set(threatsim.SABOTAGE_FOR_SCENARIO) == set(ScenarioId)

    def test_platform_scenario_transcript_declares_its_scope(self):
        result = run_one(ScenarioId.PLATFORM_VULNERABILITY)
        assert result.outcome is Outcome.DETECTED
        assert any("OS exploits not simulated" in response
                   for _, response in result.transcript)

    def test_summary_line_format(self):
        result = run_one(ScenarioId.EXCESSIVE_PRIVILEGE)
        line = result.line()
        assert line.startswith("scenario=excessive_privilege outcome=Prevented")
        summary = threatsim.summarize([result])
        assert "total=1 breached=0" in summary
