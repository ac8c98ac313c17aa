import pytest
from fastapi.testclient import TestClient

from ipseq.demo import make_demo_tasks
from ipseq.server import create_app


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    tasks_dir = tmp_path_factory.mktemp("tasks")
    make_demo_tasks(tasks_dir)
    app = create_app(tasks_dir=tasks_dir)
    return TestClient(app)


def test_version_endpoint(client):
    body = client.get("/version").json()
    assert body == {"ok": True, "schema_version": 1}


def test_tasks_lists_three_demo_tasks(client):
    body = client.get("/tasks").json()
    assert body["ok"]
    ids = [t["id"] for t in body["tasks"]]
    assert ids == ["image_caption", "nmt", "video_caption"]  # stable id order
    modalities = {t["id"]: t["modality"] for t in body["tasks"]}
    assert modalities["nmt"] == "text"
    assert modalities["image_caption"] == "features"


def test_empty_tasks_dir_yields_empty_list(tmp_path):
    empty = TestClient(create_app(tasks_dir=tmp_path))
    assert empty.get("/tasks").json()["tasks"] == []


def test_session_creation_and_unknown_ids(client):
    good = client.post("/session", json={"task_id": "nmt", "sample_id": "0"}).json()
    assert good["ok"] and good["session_id"]
    assert good["source_preview"] == "the patient rests"
    bad_task = client.post("/session", json={"task_id": "xx", "sample_id": "0"}).json()
    assert bad_task == {
        "ok": False,
        "code": "unknown_task",
        "message": bad_task["message"],
    }
    bad_sample = client.post("/session", json={"task_id": "nmt", "sample_id": "99"}).json()
    assert bad_sample["code"] == "unknown_sample"


def test_two_sessions_distinct_ids(client):
    a = client.post("/session", json={"task_id": "nmt", "sample_id": "0"}).json()
    b = client.post("/session", json={"task_id": "nmt", "sample_id": "0"}).json()
    assert a["session_id"] != b["session_id"]


def test_predict_feedback_validate_flow(client):
    sid = client.post("/session", json={"task_id": "nmt", "sample_id": "1"}).json()["session_id"]
    predicted = client.post("/predict", json={"session_id": sid}).json()
    assert predicted["ok"] and isinstance(predicted["hypothesis"], str)
    repredict = client.post("/predict", json={"session_id": sid}).json()
    assert repredict["code"] == "bad_state"

    fb = client.post(
        "/feedback",
        json={"session_id": sid, "prefix": "el", "typed_len": 1, "moved_pointer": True},
    ).json()
    assert fb["ok"]
    assert fb["hypothesis"].startswith("el")

    done = client.post("/validate", json={"session_id": sid, "learn": False}).json()
    assert done["ok"]
    assert done["keystrokes"] == 1
    assert done["mouse_actions"] == 2  # one pointer move + validation
    assert done["iterations"] == 2
    assert done["final_text"] == fb["hypothesis"]
    assert done["ksmr"] == pytest.approx(3 / len(done["final_text"]))
    again = client.post("/validate", json={"session_id": sid, "learn": False}).json()
    assert again["code"] == "bad_state"


def test_empty_prefix_feedback_is_fresh_decode(client):
    sid = client.post("/session", json={"task_id": "nmt", "sample_id": "0"}).json()["session_id"]
    initial = client.post("/predict", json={"session_id": sid}).json()["hypothesis"]
    fb = client.post("/feedback", json={"session_id": sid, "prefix": ""}).json()
    assert fb["ok"] and fb["hypothesis"] == initial


def test_unknown_session_clean_error(client):
    for path in ("/predict", "/feedback", "/validate"):
        body = client.post(path, json={"session_id": "missing", "prefix": ""}).json()
        assert body["code"] == "unknown_session"


def test_malformed_request_never_crashes(client):
    assert client.post("/session", content=b"not json").json()["code"] == "bad_request"
    assert client.post("/predict", json={"nope": 1}).json()["code"] == "bad_request"
    assert client.post("/feedback", json={"session_id": "x"}).json()["code"] == "bad_request"


def test_captioning_task_over_http(client):
    sid = client.post(
        "/session", json={"task_id": "image_caption", "sample_id": "0"}
    ).json()["session_id"]
    predicted = client.post("/predict", json={"session_id": sid}).json()
    assert predicted["ok"]
    fb = client.post(
        "/feedback",
        json={"session_id": sid, "prefix": "a", "typed_len": 1, "moved_pointer": True},
    ).json()
    assert fb["hypothesis"].startswith("a")
