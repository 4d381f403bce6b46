import numpy as np
import pytest

from conftest import small_config

from spsnn.datasets import (HEADER_DTYPE, N_SAMPLES_OFFSET, SAMPLE_DTYPE, SpikeDataset, encode_yy,
                            generate_yinyang, load_task_data, parse_spike_file, read_spike_file, write_spike_file,
                            yinyang_dataset, yinyang_label)
from spsnn.default import ConfigError, SpikeFileError


def _dataset():
    return SpikeDataset(n_neurons=4, n_classes=3,
                        events=[(np.array([0, 3, 0]), np.array([0.5, 1.25, 2.0])),
                                (np.array([], dtype=np.int64), np.array([])),
                                (np.array([2]), np.array([7.75]))],
                        labels=np.array([2, 0, 1]))


def _encode(data):
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header[0] = (b'SPKF', 1, data.n_neurons, len(data), data.n_classes)
    chunks = [header.tobytes()]
    for (ids, times), label in zip(data.events, data.labels):
        sample = np.zeros(1, dtype=SAMPLE_DTYPE)
        sample[0] = (label, len(ids))
        chunks.append(sample.tobytes())
        events = np.zeros(len(ids), dtype=[('neuron', '<u4'), ('time', '<f4')])
        events['neuron'] = ids
        events['time'] = times
        chunks.append(events.tobytes())
    return b''.join(chunks)


def _random_dataset(rng):
    n_neurons, n_classes = int(rng.integers(1, 20)), int(rng.integers(1, 6))
    events = []
    for _ in range(int(rng.integers(0, 8))):
        count = int(rng.integers(0, 12))
        # sorted overall, so sorted within every neuron
        times = np.sort(rng.uniform(0.0, 100.0, count)).astype(np.float32).astype(np.float64)
        events.append((rng.integers(0, n_neurons, count).astype(np.int64), times))
    labels = rng.integers(0, n_classes, len(events)).astype(np.int64)
    return SpikeDataset(n_neurons=n_neurons, n_classes=n_classes, events=events, labels=labels)


def test_yinyang_classes_are_balanced():
    coords, labels = generate_yinyang(3000, seed=42)
    assert np.bincount(labels).tolist() == [1000, 1000, 1000]
    np.testing.assert_array_equal(yinyang_label(coords[:, 0], coords[:, 1]), labels)
    assert np.all(np.hypot(coords[:, 0] - 0.5, coords[:, 1] - 0.5) <= 0.5)


def test_yinyang_geometry():
    assert int(yinyang_label(0.75, 0.5)) == 2
    assert int(yinyang_label(0.25, 0.5)) == 2
    # the big lobes around the dots
    assert int(yinyang_label(0.25, 0.35)) == 0
    assert int(yinyang_label(0.75, 0.65)) == 1


def test_yinyang_is_reproducible():
    first, second = yinyang_dataset(30, 7, 10.0), yinyang_dataset(30, 7, 10.0)
    np.testing.assert_array_equal(first.labels, second.labels)
    for (ids_a, t_a), (ids_b, t_b) in zip(first.events, second.events):
        np.testing.assert_array_equal(ids_a, ids_b)
        np.testing.assert_array_equal(t_a, t_b)


def test_encode_yinyang():
    ids, times = encode_yy(np.array([[0.2, 0.6]]), window=10.0)[0]
    assert ids.tolist() == [0, 1, 2, 3, 4]
    np.testing.assert_allclose(times, [2.0, 6.0, 8.0, 4.0, 0.0])


def test_batches_cover_every_sample(rng):
    data = yinyang_dataset(10, 1, 10.0)
    batches = list(data.batches(4, rng))
    assert [len(b) for b in batches] == [4, 4, 2]
    assert sorted(np.concatenate(batches).tolist()) == list(range(10))


def test_spike_file_round_trip(tmp_path):
    data = _dataset()
    path = tmp_path / 'data.spk'
    write_spike_file(path, data)
    loaded = read_spike_file(path)
    assert (loaded.n_neurons, loaded.n_classes, len(loaded)) == (4, 3, 3)
    assert loaded.labels.tolist() == [2, 0, 1]
    for (ids, times), (ids_ref, times_ref) in zip(loaded.events, data.events):
        assert ids.tolist() == ids_ref.tolist()
        assert times.tolist() == times_ref.tolist()


def test_truncated_spike_file_reports_offset(tmp_path):
    data = SpikeDataset(n_neurons=2, n_classes=2, events=[(np.array([0, 1]), np.array([1.0, 2.0]))],
                        labels=np.array([1]))
    path = tmp_path / 'data.spk'
    write_spike_file(path, data)
    buffer = path.read_bytes()
    with pytest.raises(SpikeFileError) as e:
        parse_spike_file(buffer[:-3])
    assert e.value.offset == HEADER_DTYPE.itemsize + SAMPLE_DTYPE.itemsize
    with pytest.raises(SpikeFileError) as e:
        parse_spike_file(buffer + b'\x00')
    assert e.value.offset == len(buffer)
    with pytest.raises(SpikeFileError) as e:
        parse_spike_file(b'NOPE' + buffer[4:])
    assert e.value.offset == 0


def test_sample_count_is_checked_before_reading_samples():
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header[0] = (b'SPKF', 1, 4, 0xFFFFFFFF, 2)
    with pytest.raises(SpikeFileError) as e:
        parse_spike_file(header.tobytes())
    assert e.value.offset == N_SAMPLES_OFFSET
    # one sample header too few
    data = _dataset()
    buffer = bytearray(_encode(data))
    buffer[N_SAMPLES_OFFSET:N_SAMPLES_OFFSET + 4] = np.array([200], dtype='<u4').tobytes()
    with pytest.raises(SpikeFileError):
        parse_spike_file(bytes(buffer))

def test_invalid_spike_file_contents(tmp_path):
    bad_label = SpikeDataset(n_neurons=2, n_classes=2, events=[(np.array([0]), np.array([1.0]))],
                             labels=np.array([5]))
    path = tmp_path / 'label.spk'
    write_spike_file(path, bad_label)
    with pytest.raises(SpikeFileError):
        read_spike_file(path)
    decreasing = SpikeDataset(n_neurons=2, n_classes=2, events=[(np.array([1, 1]), np.array([3.0, 1.0]))],
                              labels=np.array([0]))
    write_spike_file(path, decreasing)
    with pytest.raises(SpikeFileError):
        read_spike_file(path)
    with pytest.raises(SpikeFileError):
        read_spike_file(tmp_path / 'missing.spk')


def test_load_spike_file_task(tmp_path):
    data = _dataset()
    write_spike_file(tmp_path / 'train.spk', data)
    write_spike_file(tmp_path / 'test.spk', data)
    config = small_config(task='spikefile', n_inputs=4, train_file=str(tmp_path / 'train.spk'),
                          test_file=str(tmp_path / 'test.spk'))
    train, test = load_task_data(config)
    assert len(train) == len(test) == 3
    with pytest.raises(ConfigError):
        load_task_data(config.replace(n_inputs=5))
    with pytest.raises(ConfigError):
        load_task_data(config.replace(n_outputs=2))


def test_random_spike_files_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    path = tmp_path / 'data.spk'
    for _ in range(50):
        data = _random_dataset(rng)
        write_spike_file(path, data)
        assert path.read_bytes() == _encode(data)
        loaded = read_spike_file(path)
        assert (loaded.n_neurons, loaded.n_classes) == (data.n_neurons, data.n_classes)
        np.testing.assert_array_equal(loaded.labels, data.labels)
        for (ids, times), (ids_ref, times_ref) in zip(loaded.events, data.events):
            np.testing.assert_array_equal(ids, ids_ref)
            np.testing.assert_array_equal(times, times_ref)


def test_corrupted_spike_files_fail_with_an_offset():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        buffer = bytearray(_encode(_random_dataset(rng)))
        action = rng.integers(3)
        if action == 0:
            for position in rng.integers(0, len(buffer), size=int(rng.integers(1, 4))):
                buffer[position] = int(rng.integers(256))
        elif action == 1:
            del buffer[int(rng.integers(0, len(buffer))):]
        else:
            buffer += rng.bytes(int(rng.integers(1, 16)))
        try:
            data = parse_spike_file(bytes(buffer))
        except SpikeFileError as e:
            assert 0 <= e.offset <= len(buffer)
        else:
            assert all(ids.size == 0 or ids.max() < data.n_neurons for ids, _ in data.events)
            assert all(label < data.n_classes for label in data.labels)
