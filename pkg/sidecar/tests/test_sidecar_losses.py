"""Contrastive loss closed forms, gradients, and contracts."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from clirkit_sidecar.errors import UsageError
from clirkit_sidecar.losses import infonce_loss, word_contrastive_loss


def _unit_rows(rng: np.random.Generator, *shape: int) -> torch.Tensor:
    rows = rng.standard_normal(shape)
    rows /= np.linalg.norm(rows, axis=-1, keepdims=True)
    return torch.tensor(rows, dtype=torch.float64)


def _central_difference_grad(fn, tensor: torch.Tensor, h: float = 1e-6) -> torch.Tensor:
    """Coordinate-wise central differences of a scalar function."""
    grad = torch.zeros_like(tensor)
    flat = tensor.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.shape[0]):
        original = flat[i].item()
        flat[i] = original + h
        upper = fn().item()
        flat[i] = original - h
        lower = fn().item()
        flat[i] = original
        out[i] = (upper - lower) / (2 * h)
    return grad


class TestInfoNceClosedForms:
    def test_uniform_similarities_give_log_batch_size(self):
        for batch in (2, 3, 5, 8):
            row = _unit_rows(np.random.default_rng(batch), 1, 12)
            q = row.repeat(batch, 1)
            d = row.repeat(batch, 1)
            loss = infonce_loss(q, d, temperature=0.1)
            assert float(loss) == pytest.approx(math.log(batch), abs=1e-6)
            both = infonce_loss(q, d, temperature=0.1, symmetric=True)
            assert float(both) == pytest.approx(math.log(batch), abs=1e-6)

    def test_two_pair_orthogonal_fixture(self):
        # positives at cosine 1, cross terms at 0, temperature 0.1
        q = torch.eye(4, dtype=torch.float64)[:2]
        d = torch.eye(4, dtype=torch.float64)[:2]
        loss = float(infonce_loss(q, d, temperature=0.1))
        assert loss == pytest.approx(4.54e-5, abs=1e-6)
        assert loss == pytest.approx(math.log1p(math.exp(-10.0)), abs=1e-12)

    def test_gradients_match_central_differences(self):
        for seed in (0, 1, 2):
            rng = np.random.default_rng(seed)
            q = _unit_rows(rng, 8, 16).requires_grad_(True)
            d = _unit_rows(rng, 8, 16).requires_grad_(True)
            loss = infonce_loss(q, d, temperature=0.1, symmetric=True)
            loss.backward()
            for leaf in (q, d):
                with torch.no_grad():
                    numeric = _central_difference_grad(
                        lambda: infonce_loss(q, d, temperature=0.1, symmetric=True),
                        leaf,
                    )
                gap = (leaf.grad - numeric).norm() / numeric.norm()
                assert float(gap) <= 1e-4

    def test_symmetric_is_the_mean_of_both_directions(self):
        rng = np.random.default_rng(7)
        q = _unit_rows(rng, 5, 9)
        d = _unit_rows(rng, 5, 9)
        one_way = infonce_loss(q, d, temperature=0.3)
        other_way = infonce_loss(d, q, temperature=0.3)
        both = infonce_loss(q, d, temperature=0.3, symmetric=True)
        assert float(both) == pytest.approx(
            (float(one_way) + float(other_way)) / 2, abs=1e-12
        )

    def test_rotation_invariance(self):
        rng = np.random.default_rng(11)
        q = _unit_rows(rng, 6, 10)
        d = _unit_rows(rng, 6, 10)
        basis, _ = np.linalg.qr(rng.standard_normal((10, 10)))
        rotation = torch.tensor(basis, dtype=torch.float64)
        before = float(infonce_loss(q, d, temperature=0.1))
        after = float(infonce_loss(q @ rotation, d @ rotation, temperature=0.1))
        assert after == pytest.approx(before, abs=1e-9)

    @settings(deadline=None, max_examples=40)
    @given(batch=st.integers(2, 10), temperature=st.floats(0.01, 5.0))
    def test_uniform_batches_hit_log_b_for_any_temperature(self, batch, temperature):
        row = _unit_rows(np.random.default_rng(0), 1, 6)
        loss = infonce_loss(
            row.repeat(batch, 1), row.repeat(batch, 1), temperature=temperature
        )
        assert float(loss) == pytest.approx(math.log(batch), abs=1e-9)
        assert float(loss) >= 0.0


class TestInfoNceContracts:
    def test_single_pair_batch_rejected(self):
        row = _unit_rows(np.random.default_rng(0), 1, 4)
        with pytest.raises(UsageError, match="batch of >= 2"):
            infonce_loss(row, row)

    def test_nonpositive_temperature_rejected(self):
        rows = _unit_rows(np.random.default_rng(0), 3, 4)
        for bad in (0.0, -0.5):
            with pytest.raises(UsageError, match="temperature"):
                infonce_loss(rows, rows, temperature=bad)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(UsageError, match="shapes differ"):
            infonce_loss(_unit_rows(rng, 3, 4), _unit_rows(rng, 4, 4))

    def test_non_unit_rows_rejected(self):
        rows = _unit_rows(np.random.default_rng(0), 3, 4)
        with pytest.raises(UsageError, match="unit-norm"):
            infonce_loss(rows * 2.0, rows)

    def test_one_dimensional_input_rejected(self):
        flat = torch.ones(4, dtype=torch.float64) / 2.0
        with pytest.raises(UsageError, match="2-D"):
            infonce_loss(flat, flat)


class TestWordContrastiveLoss:
    def test_negative_tied_with_positive_gives_log_two(self):
        # similarities to the positive and the negative all zero, for both
        # pairing directions
        anchor = torch.eye(3, dtype=torch.float64)[0:1]
        positive = torch.eye(3, dtype=torch.float64)[1:2]
        negative = torch.eye(3, dtype=torch.float64)[2:3].unsqueeze(0)
        loss = word_contrastive_loss(anchor, positive, negative, temperature=0.1)
        assert float(loss) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_separated_instance_drives_loss_to_zero(self):
        anchor = torch.eye(2, dtype=torch.float64)[0:1]
        positive = anchor.clone()
        negative = (-anchor).unsqueeze(0)
        loss = word_contrastive_loss(anchor, positive, negative, temperature=0.1)
        assert float(loss) < 1e-6

    def test_gradients_match_central_differences(self):
        rng = np.random.default_rng(3)
        anchors = _unit_rows(rng, 3, 8).requires_grad_(True)
        positives = _unit_rows(rng, 3, 8).requires_grad_(True)
        negatives = _unit_rows(rng, 3, 2, 8).requires_grad_(True)
        loss = word_contrastive_loss(anchors, positives, negatives, temperature=0.2)
        loss.backward()
        for leaf in (anchors, positives, negatives):
            with torch.no_grad():
                numeric = _central_difference_grad(
                    lambda: word_contrastive_loss(
                        anchors, positives, negatives, temperature=0.2
                    ),
                    leaf,
                )
            gap = (leaf.grad - numeric).norm() / numeric.norm()
            assert float(gap) <= 1e-4

    def test_empty_negative_set_rejected(self):
        rng = np.random.default_rng(0)
        anchors = _unit_rows(rng, 2, 4)
        with pytest.raises(UsageError, match="at least one negative"):
            word_contrastive_loss(
                anchors, anchors, torch.zeros((2, 0, 4), dtype=torch.float64)
            )

    def test_batch_size_mismatch_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(UsageError, match="must agree"):
            word_contrastive_loss(
                _unit_rows(rng, 2, 4),
                _unit_rows(rng, 2, 4),
                _unit_rows(rng, 3, 1, 4),
            )

    def test_rotation_invariance(self):
        rng = np.random.default_rng(21)
        anchors = _unit_rows(rng, 4, 6)
        positives = _unit_rows(rng, 4, 6)
        negatives = _unit_rows(rng, 4, 3, 6)
        basis, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        rotation = torch.tensor(basis, dtype=torch.float64)
        before = float(word_contrastive_loss(anchors, positives, negatives))
        after = float(
            word_contrastive_loss(
                anchors @ rotation, positives @ rotation, negatives @ rotation
            )
        )
        assert after == pytest.approx(before, abs=1e-9)
