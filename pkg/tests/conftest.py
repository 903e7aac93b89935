"""Collects acceptance-criterion outcomes and prints one line per criterion."""

_RESULTS: dict[str, dict] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    entry = _RESULTS.setdefault(props["criterion"], {"passed": True, "detail": ""})
    if props.get("detail"):
        entry["detail"] = props["detail"]
    if report.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_RESULTS, key=lambda s: int(s.split(".")[0])):
        entry = _RESULTS[name]
        status = "PASS" if entry["passed"] else "FAIL"
        line = f"{status}  {name}"
        if entry["detail"]:
            line += f"  [{entry['detail']}]"
        terminalreporter.write_line(line)
