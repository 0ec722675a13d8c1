import pytest
from hypothesis import HealthCheck, settings

from overdraft.incentives import no_interest
from overdraft.model import LoanAgreement
from overdraft.settlement import Ledger, LedgerConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# (criterion, passed, detail) lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:>2}: {detail}")


def make_ledger(balances: dict, *, interest=no_interest, **config) -> Ledger:
    ledger = Ledger(LedgerConfig(interest=interest, **config))
    for node, bal in balances.items():
        ledger.add_account(node, bal)
    return ledger


def loan(lender, borrower, amount, duration=100, **kw) -> LoanAgreement:
    return LoanAgreement(lender, borrower, amount, duration, **kw)


@pytest.fixture
def ledger_factory():
    return make_ledger


def random_view(rng, max_nodes=7, max_edges=12, *, acyclic=False, max_amount=60):
    """Random small loan view with payer ``"0"``.

    Acyclic views only have edges from higher to lower node numbers, so every
    lender is further from the payer than its borrower. Parallel edges are
    allowed.
    """
    from overdraft.model import LoanNetworkView

    n = rng.randint(1, max_nodes)
    reps = {str(i): round(rng.random(), 6) for i in range(n)}
    loans = []
    if n > 1:
        for _ in range(rng.randint(0, max_edges)):
            a, b = rng.sample(range(n), 2)
            if acyclic and a < b:
                a, b = b, a
            loans.append((str(a), str(b), rng.randint(0, max_amount)))
    return LoanNetworkView.simple(reps, loans)
