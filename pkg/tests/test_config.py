import logging
import os

import pytest

from config import threads_from_env


@pytest.mark.parametrize('raw', [None, '', '0'])
def test_unset_threads_means_all_cores(raw):
    assert threads_from_env(raw) == (os.cpu_count() or 1)


def test_explicit_thread_count():
    assert threads_from_env('3') == 3


@pytest.mark.parametrize('raw', ['four', '2.5', '-1'])
def test_bad_thread_count_falls_back_with_a_warning(raw, caplog):
    with caplog.at_level(logging.WARNING, logger='nfff'):
        assert threads_from_env(raw) == (os.cpu_count() or 1)
    assert 'NFFF_THREADS' in caplog.text
