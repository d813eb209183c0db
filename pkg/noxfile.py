import nox


@nox.session
def tests(session):
    """nox -s tests -- -k trainer"""
    session.install("-e", ".[dev]")
    session.run("pytest", "test", "--cov=udit", *session.posargs)


@nox.session
def acceptance(session):
    """nox -s acceptance"""
    session.install("-e", ".[dev]")
    session.run("pytest", "test/test_acceptance.py", "--run-slow", "--timeout=0")


@nox.session
def static(session):
    """nox -s static"""
    session.install("-e", ".[dev]")
    session.run("isort", "--check-only", "--diff", "udit", "test")
    session.run("flake8", "udit", "test")
    session.run("pylint", "udit", "-E")
