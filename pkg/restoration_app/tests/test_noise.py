import numpy as np
from django.test import SimpleTestCase

from hsdt_app.exceptions import NoiseSpecError, NumericalError, ShapeError
from restoration_app.api.serializers import NoiseSpecSerializer
from restoration_app.noise import (DEADLINE, GAUSSIAN, GAUSSIAN_BLIND, GAUSSIAN_CHOICE, IMPULSE, MIXTURE, NONIID,
                                   STRIPE, NoiseSpec, Rng, affected_band_count, apply_complex, apply_gaussian,
                                   column_count, degrade, noise_level)
from restoration_app.synthetic import low_rank_hsi


class NoiseTestCase(SimpleTestCase):

    def setUp(self):
        self.clean = low_rank_hsi(64, 64, 31, seed=0)


class RngTests(SimpleTestCase):

    def test_same_address_same_stream(self):
        a = Rng(5).child(1, 2).stream(3, band=4).random(8)
        b = Rng(5).child(1, 2).stream(3, band=4).random(8)
        np.testing.assert_array_equal(a, b)

    def test_bands_get_independent_streams(self):
        rng = Rng(5)
        self.assertFalse(np.array_equal(rng.stream(3, band=0).random(8), rng.stream(3, band=1).random(8)))

    def test_seed_must_fit_64_bits(self):
        with self.assertRaises(NoiseSpecError):
            Rng(2 ** 64)
        with self.assertRaises(NoiseSpecError):
            Rng(-1)


class NoiseSpecTests(SimpleTestCase):

    def test_invalid_fields(self):
        for options in ({'sigma': -1.0}, {'sigmas': ()}, {'column_range': (0.2, 0.1)},
                        {'impulse_range': (0.5, 1.5)}, {'band_fraction': 2.0}):
            with self.subTest(options=options), self.assertRaises(NoiseSpecError):
                NoiseSpec(GAUSSIAN, **options)

    def test_unknown_kind(self):
        with self.assertRaises(NoiseSpecError):
            NoiseSpec('poisson')

    def test_serializer_builds_spec(self):
        serializer = NoiseSpecSerializer(data={'kind': STRIPE, 'seed': 3, 'column_range': '0.1, 0.2'})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        spec = serializer.save()
        self.assertEqual(spec.column_range, (0.1, 0.2))
        self.assertEqual(spec.seed, 3)

    def test_serializer_rejects_inverted_range(self):
        serializer = NoiseSpecSerializer(data={'kind': IMPULSE, 'seed': 0, 'impulse_range': '0.7,0.1'})
        self.assertFalse(serializer.is_valid())


class CountingTests(SimpleTestCase):

    def test_affected_band_count(self):
        self.assertEqual(affected_band_count(31, 1 / 3), 10)
        self.assertEqual(affected_band_count(2, 0.1), 1)
        self.assertEqual(affected_band_count(5, 0.0), 0)
        self.assertEqual(affected_band_count(4, 1.0), 4)

    def test_column_count_stays_in_range(self):
        generator = np.random.default_rng(0)
        counts = {column_count(64, (0.05, 0.15), generator) for _ in range(200)}
        self.assertTrue(counts <= set(range(4, 10)))

    def test_column_count_is_at_least_one(self):
        self.assertEqual(column_count(4, (0.0, 0.1), np.random.default_rng(0)), 1)


class GaussianTests(NoiseTestCase):

    def test_zero_sigma_is_identity(self):
        noisy, _ = degrade(self.clean, NoiseSpec(GAUSSIAN, sigma=0.0))
        np.testing.assert_array_equal(noisy, self.clean)

    def test_noise_level_matches_sigma(self):
        noisy, log = degrade(self.clean, NoiseSpec(GAUSSIAN, sigma=50.0, seed=1))
        self.assertAlmostEqual(np.std(noisy - self.clean), 50 / 255, delta=0.02 * 50 / 255)
        self.assertAlmostEqual(noise_level(log), 50 / 255)

    def test_same_seed_same_noise(self):
        first, _ = degrade(self.clean, NoiseSpec(GAUSSIAN, seed=9))
        second, _ = degrade(self.clean, NoiseSpec(GAUSSIAN, seed=9))
        third, _ = degrade(self.clean, NoiseSpec(GAUSSIAN, seed=10))
        np.testing.assert_array_equal(first, second)
        self.assertFalse(np.array_equal(first, third))

    def test_band_noise_does_not_depend_on_band_count(self):
        narrow, _ = degrade(self.clean[..., :5], NoiseSpec(GAUSSIAN, seed=2))
        wide, _ = degrade(self.clean, NoiseSpec(GAUSSIAN, seed=2))
        np.testing.assert_allclose(narrow - self.clean[..., :5], wide[..., :5] - self.clean[..., :5], atol=1e-12)

    def test_blind_sigma_is_shared_by_all_bands(self):
        _, log = degrade(self.clean, NoiseSpec(GAUSSIAN_BLIND, sigma_range=(10.0, 70.0), seed=4))
        sigmas = {band[0]['sigma'] for band in log.bands}
        self.assertEqual(len(sigmas), 1)
        self.assertTrue(10.0 <= sigmas.pop() <= 70.0)

    def test_choice_draws_from_the_set(self):
        for seed in range(5):
            _, log = degrade(self.clean, NoiseSpec(GAUSSIAN_CHOICE, sigmas=(10.0, 30.0), seed=seed))
            self.assertIn(log.bands[0][0]['sigma'], (10.0, 30.0))

    def test_negative_sigma(self):
        with self.assertRaises(NoiseSpecError):
            apply_gaussian(self.clean, -1.0, Rng(0))

    def test_input_checks(self):
        with self.assertRaises(ShapeError):
            degrade(self.clean[..., 0], NoiseSpec(GAUSSIAN))
        broken = self.clean.copy()
        broken[0, 0, 0] = np.nan
        with self.assertRaises(NumericalError):
            degrade(broken, NoiseSpec(GAUSSIAN))


class ComplexNoiseTests(NoiseTestCase):

    def test_noniid_sigma_per_band(self):
        _, log = degrade(self.clean, NoiseSpec(NONIID, sigmas=(10.0, 30.0, 50.0, 70.0), seed=1))
        sigmas = [band[0]['sigma'] for band in log.bands]
        self.assertTrue(set(sigmas) <= {10.0, 30.0, 50.0, 70.0})
        self.assertGreater(len(set(sigmas)), 1)

    def test_stripe_hits_a_third_of_the_bands(self):
        _, log = degrade(self.clean, NoiseSpec(STRIPE, seed=1))
        bands = log.affected(STRIPE)
        self.assertEqual(len(bands), 10)
        for band in bands:
            (entry,) = log.entries(band, STRIPE)
            self.assertTrue(4 <= len(entry['columns']) <= 9)
            self.assertTrue(all(abs(offset) <= 0.25 for offset in entry['offsets']))

    def test_deadline_columns_are_zero(self):
        noisy, log = degrade(self.clean, NoiseSpec(DEADLINE, seed=2))
        self.assertEqual(len(log.affected(DEADLINE)), 10)
        for band in log.affected(DEADLINE):
            columns = log.entries(band, DEADLINE)[0]['columns']
            self.assertTrue(np.all(noisy[:, columns, band] == 0.0))

    def test_impulse_sets_extreme_values(self):
        noisy, log = degrade(self.clean, NoiseSpec(IMPULSE, seed=3))
        for band in log.affected(IMPULSE):
            (entry,) = log.entries(band, IMPULSE)
            self.assertTrue(0.1 <= entry['density'] <= 0.7)
            extremes = np.isin(noisy[..., band], (0.0, 1.0)).sum()
            self.assertGreaterEqual(extremes, entry['voxels'])

    def test_mixture_applies_every_corruption(self):
        noisy, log = degrade(self.clean, NoiseSpec(MIXTURE, seed=4))
        for corruption in (NONIID, STRIPE, IMPULSE, DEADLINE):
            self.assertTrue(log.affected(corruption), corruption)
        for band in log.affected(DEADLINE):
            self.assertTrue(np.all(noisy[:, log.entries(band, DEADLINE)[0]['columns'], band] == 0.0))

    def test_mixture_is_reproducible(self):
        first, first_log = degrade(self.clean, NoiseSpec(MIXTURE, seed=5))
        second, second_log = degrade(self.clean, NoiseSpec(MIXTURE, seed=5))
        np.testing.assert_array_equal(first, second)
        self.assertEqual(first_log.as_dict(), second_log.as_dict())

    def test_gaussian_kind_is_not_complex(self):
        with self.assertRaises(NoiseSpecError):
            apply_complex(self.clean, NoiseSpec(GAUSSIAN))
