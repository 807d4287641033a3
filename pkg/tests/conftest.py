ACCEPTANCE_MODULE = "test_acceptance"


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and ACCEPTANCE_MODULE in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[{'PASS' if report.passed else 'FAIL'}] {name}", flush=True)
