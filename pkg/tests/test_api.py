import io

import numpy as np
import pytest
import yaml
from fastapi.testclient import TestClient
from PIL import Image

from api.app import app
from shapes.synthetic import disk_grid


@pytest.fixture
def client():
    with TestClient(app) as c:
        yield c


def png_bytes(array, mode="L"):
    buf = io.BytesIO()
    Image.fromarray(array, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "healthy"


def test_poses_for_uploaded_mask(client):
    files = {"file": ("film_03.png", png_bytes(disk_grid(64, 20.0) * 255), "image/png")}
    response = client.post("/poses", files=files, data={"k": "1", "seed": "2", "restarts": "1"})
    assert response.status_code == 200
    body = response.json()
    assert body["segment_id"] == "film_03"
    assert len(body["poses"]) == 1
    assert body["loss"]["total"] < 0


def test_poses_rejects_colour_images(client):
    files = {"file": ("rgb.png", png_bytes(np.full((16, 16, 3), 255, dtype=np.uint8), "RGB"), "image/png")}
    response = client.post("/poses", files=files)
    assert response.status_code == 400
    assert "non-grayscale" in response.json()["detail"]


def test_plan_collinear_points(client):
    response = client.post("/plan", json={"points": [[0, 0], [10, 0], [20, 0]], "algorithm": "greedy_dijkstra"})
    assert response.status_code == 200
    body = response.json()
    assert body["order"] == [0, 1, 2]
    assert body["length_mm"] == 20.0


def test_plan_christofides_reports_closed_length(client):
    square = {"points": [[0, 0], [1, 0], [1, 1], [0, 1]], "algorithm": "christofides"}
    body = client.post("/plan", json=square).json()
    assert body["length_mm"] == pytest.approx(3.0)
    assert body["closed_length_mm"] == pytest.approx(4.0)


def test_plan_rejects_unknown_planner_and_bad_settings(client):
    assert client.post("/plan", json={"points": [[0, 0]], "algorithm": "dijkstra"}).status_code == 400
    bad = {"points": [[0, 0], [1, 1]], "planner": {"alpha": -1}}
    assert client.post("/plan", json=bad).status_code == 422


def test_validate_config_text(client, tmp_path):
    Image.fromarray(disk_grid(16, 5.0) * 255, mode="L").save(tmp_path / "m.pgm")
    good = yaml.safe_dump({"masks": {"glob": str(tmp_path / "*.pgm")}})
    assert client.post("/validate", json={"config": good}).json() == {"valid": True, "diagnostics": []}

    bad = client.post("/validate", json={"config": "planner: {alpha: -0.1}"}).json()
    assert not bad["valid"]
    assert bad["diagnostics"] == [{"path": "planner.alpha", "message": "planner.alpha out of range"}]

    broken = client.post("/validate", json={"config": "seed: [1"}).json()
    assert "unreadable YAML" in broken["diagnostics"][0]["message"]


def test_photoconductance_endpoint(client):
    v = [0.0, 1.0, 2.0, 3.0]
    body = client.post(
        "/photoconductance",
        json={"voltages": v, "current_light": [2e-9 * x for x in v], "current_dark": [0.0] * 4},
    ).json()
    assert body["G_ph"] == pytest.approx(2e-9)
    assert body["fit_r2"] == pytest.approx(1.0)
    assert body["points"] == 4

    mismatched = {"voltages": v, "current_light": [0.0] * 3, "current_dark": [0.0] * 4}
    assert client.post("/photoconductance", json=mismatched).status_code == 400
