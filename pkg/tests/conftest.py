import acceptance_log


def _order(key):
    head = str(key).split("-")[0]
    return (int(head) if head.isdigit() else 99, str(key))


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(acceptance_log.RESULTS, key=_order):
        ok, detail = acceptance_log.RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")
