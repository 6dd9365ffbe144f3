import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains networks or runs full extractions")


@pytest.fixture(scope="session")
def net_cache(request):
    return request.config.cache.mkdir("rnnextract-nets")


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
