import pytest
from filelock import Timeout

from circular_pat.exceptions import CommandError
from circular_pat.lock import OutputLock


def test_lock_file_lifecycle(tmp_path):
    out_dir = tmp_path / "new" / "out"
    lock = OutputLock(out_dir)
    assert out_dir.is_dir()
    with lock:
        assert lock.is_locked
        assert (out_dir / OutputLock.LOCK_FILE).exists()
    assert not lock.is_locked
    assert not (out_dir / OutputLock.LOCK_FILE).exists()


def test_reentrant(tmp_path):
    lock = OutputLock(tmp_path)
    with lock:
        with lock:
            pass
        assert lock.is_locked
    assert not lock.is_locked


def test_busy_directory(mocker, tmp_path):
    lock = OutputLock(tmp_path, timeout=0)
    mocker.patch.object(lock._lock, "acquire", side_effect=Timeout(str(tmp_path)))
    with pytest.raises(CommandError, match="in use"):
        with lock:
            pass
