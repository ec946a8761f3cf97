"""Run the Django test suites under pytest with a throwaway test database."""
import os

import django
import pytest

collect_ignore = ['examples']

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'laip.settings')
django.setup()


@pytest.fixture(scope='session', autouse=True)
def django_test_environment():
    from django.test.runner import DiscoverRunner

    runner = DiscoverRunner(verbosity=0, interactive=False)
    runner.setup_test_environment()
    old_config = runner.setup_databases()
    yield
    runner.teardown_databases(old_config)
    runner.teardown_test_environment()
