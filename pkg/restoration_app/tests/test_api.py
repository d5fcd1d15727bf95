import numpy as np
from django.core.files.uploadedfile import SimpleUploadedFile
from django.urls import reverse
from rest_framework import status
from rest_framework.test import APIClient, APISimpleTestCase

from restoration_app.containers import encode_hsi


def upload(hsi, name):
    return SimpleUploadedFile(name, encode_hsi(hsi), content_type='application/octet-stream')


class MetricsViewTests(APISimpleTestCase):

    def setUp(self):
        self.client = APIClient()
        self.ref = np.random.default_rng(0).uniform(0.2, 0.8, (16, 16, 4))

    def post(self, ref, est, **extra):
        data = {'ref': upload(ref, 'ref.hsic'), 'est': upload(est, 'est.hsic'), **extra}
        return self.client.post(reverse('metrics'), data, format='multipart')

    def test_identical_pair(self):
        response = self.post(self.ref, self.ref)
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['psnr'], 100.0)
        self.assertAlmostEqual(response.data['ssim'], 1.0)
        self.assertAlmostEqual(response.data['sam'], 0.0, places=6)
        self.assertEqual(response.data['name'], 'est.hsic')

    def test_offset_estimate(self):
        response = self.post(self.ref, self.ref + 0.1)
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertAlmostEqual(response.data['psnr'], 20.0, places=4)

    def test_data_range(self):
        response = self.post(self.ref, self.ref + 0.1, data_range='2')
        self.assertAlmostEqual(response.data['psnr'], 20.0 + 20 * np.log10(2), places=4)

    def test_shape_mismatch(self):
        response = self.post(self.ref, self.ref[:8])
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

    def test_missing_estimate(self):
        response = self.client.post(reverse('metrics'), {'ref': upload(self.ref, 'ref.hsic')}, format='multipart')
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertIn('est', response.data)
