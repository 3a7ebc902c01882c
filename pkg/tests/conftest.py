import sys


def pytest_terminal_summary(terminalreporter):
    mods = [m for name, m in list(sys.modules.items()) if name.rsplit(".", 1)[-1] == "test_acceptance"]
    if not mods or not mods[0].RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mods[0].summary_lines():
        terminalreporter.write_line(line)
