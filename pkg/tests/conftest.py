import threadpoolctl


def pytest_configure(config):
    # single-threaded BLAS keeps every numeric result bit-reproducible
    threadpoolctl.threadpool_limits(1)
