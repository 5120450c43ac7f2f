import pytest

TINY = dict(p_list=[0, 4], train_steps=300, safe_steps=300, rand_steps=100, n_episodes=2, k=3,
            eval_episodes=2, hidden=16, learning_starts=50, batch_size=16, buffer_size=500,
            target_update_interval=50)


@pytest.fixture
def tiny():
    return dict(TINY)
