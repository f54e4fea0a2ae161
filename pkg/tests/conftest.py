
from hypothesis import strategies as st

from virodyn.model import Parameters

# filled by test_acceptance; printed at the end of the session
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def record(criterion: int, label: str, ok: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{lbl}: {'ok' if good else 'FAILED'} ({d})" for lbl, good, d in parts)
        tr.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} | {detail}")


@st.composite
def parameters(draw, r_max: float = 500.0, n_max: float = 5000.0):
    """Valid parameter sets spread over several orders of magnitude."""
    alpha = draw(st.floats(0.2, 5.0))
    mu_t = draw(st.floats(0.01, 0.5))
    mu_i = mu_t + draw(st.floats(0.01, 2.0))
    mu_v = draw(st.floats(0.5, 40.0))
    gamma = 10 ** draw(st.floats(-4.0, -2.0))
    t_max = max(alpha / mu_t * 1.01, 10 ** draw(st.floats(2.0, 4.5)))
    n = draw(st.floats(1.0, n_max))
    r = draw(st.floats(0.0, r_max))
    return Parameters(alpha=alpha, gamma=gamma, mu_T=mu_t, mu_I=mu_i, mu_V=mu_v,
                      t_max=t_max, n_burst=n, r=r)
