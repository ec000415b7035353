from django.contrib.auth import get_user_model
from django.urls import reverse
from rest_framework import status
from rest_framework.test import APIClient, APITestCase

from cqed_app.models import ScenarioRun

FIG5 = {"g": 38.0, "kappa": 8.7, "gamma": 3.0, "Gamma_bw": 100.0, "r": 0.5}


# Test class for browsing recorded runs
class ScenarioRunAPITests(APITestCase):
    # Set up two recorded runs
    def setUp(self):
        self.client = APIClient()
        self.run = ScenarioRun.objects.create(
            name="fig5",
            mode="params",
            seed=0,
            output_dir="/tmp/runs/fig5",
            manifest={"derived": {"C1": 55.33}},
        )
        self.other = ScenarioRun.objects.create(
            name="fig8", mode="qrt", seed=3, output_dir="/tmp/runs/fig8", manifest={}
        )

    # Test case: Anyone can list runs, newest first
    def test_list_runs(self):
        response = self.client.get(reverse("scenariorun-list"))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual([run["name"] for run in response.data], ["fig8", "fig5"])  # type: ignore for `response.data`

    # Test case: Search narrows the list by scenario name or mode
    def test_search_runs(self):
        response = self.client.get(reverse("scenariorun-list"), {"search": "qrt"})
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(len(response.data), 1)  # type: ignore for `response.data`
        self.assertEqual(response.data[0]["name"], "fig8")  # type: ignore for `response.data`

    # Test case: Retrieve a run with its manifest
    def test_retrieve_run(self):
        response = self.client.get(reverse("scenariorun-detail", kwargs={"pk": self.run.pk}))
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data["manifest"]["derived"]["C1"], 55.33)  # type: ignore for `response.data`

    # Test case: Runs can be rendered as XML
    def test_retrieve_run_as_xml(self):
        response = self.client.get(
            reverse("scenariorun-detail", kwargs={"pk": self.run.pk}),
            HTTP_ACCEPT="application/xml",
        )
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertTrue(response["Content-Type"].startswith("application/xml"))
        self.assertIn(b"<name>fig5</name>", response.content)

    # Test case: Runs are created by the command only, even for staff
    def test_create_not_allowed(self):
        admin = get_user_model().objects.create_user(
            username="adminuser", password="adminpassword", is_staff=True
        )
        self.client.force_authenticate(user=admin)  # type: ignore for `self.client`
        response = self.client.post(reverse("scenariorun-list"), {"name": "x"}, format="json")
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)

    # Test case: Anonymous users cannot delete a run
    def test_anonymous_delete(self):
        response = self.client.delete(reverse("scenariorun-detail", kwargs={"pk": self.run.pk}))
        self.assertEqual(response.status_code, status.HTTP_403_FORBIDDEN)
        self.assertTrue(ScenarioRun.objects.filter(pk=self.run.pk).exists())

    # Test case: Non-staff users cannot delete a run
    def test_regular_user_delete(self):
        user = get_user_model().objects.create_user(username="reader", password="testpassword")
        self.client.force_authenticate(user=user)  # type: ignore for `self.client`
        response = self.client.delete(reverse("scenariorun-detail", kwargs={"pk": self.run.pk}))
        self.assertEqual(response.status_code, status.HTTP_403_FORBIDDEN)

    # Test case: Staff can delete a run
    def test_admin_delete(self):
        admin = get_user_model().objects.create_user(
            username="adminuser", password="adminpassword", is_staff=True
        )
        self.client.force_authenticate(user=admin)  # type: ignore for `self.client`
        response = self.client.delete(reverse("scenariorun-detail", kwargs={"pk": self.run.pk}))
        self.assertEqual(response.status_code, status.HTTP_204_NO_CONTENT)
        self.assertFalse(ScenarioRun.objects.filter(pk=self.run.pk).exists())

    # Test case: String form names scenario, mode and seed
    def test_str(self):
        self.assertEqual(str(self.other), "fig8 (qrt, seed 3)")


# Test class for the parameter calculator endpoint
class ParamsAPITests(APITestCase):
    # Test case: Low-intensity configuration gives the documented constants
    def test_fig5_constants(self):
        response = self.client.post(reverse("params"), FIG5, format="json")
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        data = response.data  # type: ignore for `response.data`
        self.assertAlmostEqual(data["derived"]["C1"], 55.33, places=2)
        self.assertAlmostEqual(data["derived"]["n0"], 7.791e-4, places=6)
        self.assertAlmostEqual(data["emission_ratio"], 110.65, delta=0.01)
        self.assertAlmostEqual(data["weak_field"]["Omega_MHz"], 37.83, delta=0.005)
        self.assertAlmostEqual(data["weak_field"]["alpha_beta"], -603.6, delta=0.2)
        self.assertEqual(data["params"]["N"], 1)

    # Test case: Only one or two atoms are supported
    def test_three_atoms(self):
        response = self.client.post(reverse("params"), FIG5 | {"N": 3}, format="json")
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

    # Test case: Missing coupling is a validation error
    def test_missing_field(self):
        response = self.client.post(reverse("params"), {"kappa": 8.7, "gamma": 3.0}, format="json")
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertIn("g", response.data)  # type: ignore for `response.data`

    # Test case: Non-positive rates are rejected by the parameter checks
    def test_negative_rate(self):
        response = self.client.post(reverse("params"), FIG5 | {"kappa": -1.0}, format="json")
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

    # Test case: Overdamped coupling still answers, without weak-field constants
    def test_overdamped(self):
        response = self.client.post(reverse("params"), FIG5 | {"g": 1.0}, format="json")
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertIsNone(response.data["weak_field"])  # type: ignore for `response.data`
        self.assertIn("weak_field_error", response.data)  # type: ignore for `response.data`
