import time

import pytest

from core import jobs as jobs_module
from core.errors import DataError, UsageError
from core.jobs import run_jobs


class TestRunJobs:
    def test_results_keep_submission_order(self):
        def slow_square(x):
            time.sleep(0.01 * (5 - x))
            return x * x

        assert run_jobs(slow_square, range(5), jobs=3) == [0, 1, 4, 9, 16]

    def test_inline_and_threaded_agree(self):
        items = list(range(12))
        assert run_jobs(lambda x: x + 1, items, jobs=1) == run_jobs(lambda x: x + 1, items, jobs=4)

    def test_empty(self):
        assert run_jobs(lambda x: x, [], jobs=2) == []

    @pytest.mark.parametrize("jobs", [0, -2])
    def test_rejects_non_positive_jobs(self, jobs):
        with pytest.raises(UsageError):
            run_jobs(lambda x: x, [1], jobs=jobs)

    @pytest.mark.parametrize("jobs", [1, 3])
    def test_failure_propagates(self, jobs):
        def fail_on_two(x):
            if x == 2:
                raise DataError("bad item")
            return x

        with pytest.raises(DataError, match="bad item"):
            run_jobs(fail_on_two, range(4), jobs=jobs)

    @pytest.mark.parametrize("jobs", [1, 3])
    def test_progress_bar_closed_on_failure(self, monkeypatch, jobs):
        bars = []

        class RecordingBar(jobs_module.tqdm):
            def __init__(self, *args, **kwargs):
                super().__init__(*args, **kwargs)
                self.was_closed = False
                bars.append(self)

            def close(self):
                self.was_closed = True
                super().close()

        def fail(x):
            raise DataError("bad item")

        monkeypatch.setattr(jobs_module, "tqdm", RecordingBar)
        with pytest.raises(DataError):
            run_jobs(fail, range(3), jobs=jobs)
        assert len(bars) == 1 and bars[0].was_closed
