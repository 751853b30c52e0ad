"""Demo dataset: three users sharing three approvers, plus sample records.

Users A, B, C are non-clinical staff; D (doctor), E (nurse), and F (practice
manager) are the high-privilege approvers every user is paired with. Two
patients with a handful of documents round out a workable demo. The seeding
client works against any httpx-compatible client bound to a gateway.
"""

from __future__ import annotations

import base64

DEMO_SECRETS = {
    "A": "amber-meadow-9281",
    "B": "basil-harbor-4417",
    "C": "cedar-lantern-7703",
    "D": "delta-orchard-5529",
    "E": "ember-voyage-3318",
    "F": "fable-quarry-8864",
}

DEMO_PRINCIPALS = [
    {"name": "A", "display_name": "Asha (reception)", "kind": "user",
     "role": "non_clinical", "privilege": "low"},
    {"name": "B", "display_name": "Ben (billing desk)", "kind": "user",
     "role": "non_clinical", "privilege": "low"},
    {"name": "C", "display_name": "Cora (admin assistant)", "kind": "user",
     "role": "non_clinical", "privilege": "low"},
    {"name": "D", "display_name": "Dr Devi", "kind": "super_user",
     "role": "clinical", "privilege": "high"},
    {"name": "E", "display_name": "Nurse Eli", "kind": "super_user",
     "role": "clinical", "privilege": "high"},
    {"name": "F", "display_name": "Fran (practice manager)", "kind": "super_user",
     "role": "admin", "privilege": "high"},
]

DEMO_PAIRS = {
    "A": ["D", "E", "F"],
    "B": ["D", "E", "F"],
    "C": ["D", "E", "F"],
}

DEMO_PATIENTS = ["P1", "P2"]

DEMO_DOCUMENTS = [
    ("P1", "shs", b"P1 summary: hypertension management plan, current meds list."),
    ("P1", "es", b"P1 event: clinic visit, blood pressure review, dose adjusted."),
    ("P1", "clinical_note", b"P1 note: discussed recall schedule for annual check."),
    ("P2", "shs", b"P2 summary: asthma action plan, preventer inhaler daily."),
    ("P2", "billing", b"P2 invoice: consultation item 23, paid."),
]


class SeedError(RuntimeError):
    pass


def _post(client, path: str, token: str, payload: dict) -> dict:
    response = client.post(path, json=payload,
                           headers={"Authorization": f"Bearer {token}"})
    if response.status_code >= 300:
        raise SeedError(f"POST {path} -> {response.status_code}: {response.text}")
    return response.json()


def login(client, principal_id: str, secret: str) -> str:
    response = client.post("/login", json={"id": principal_id, "secret": secret})
    if response.status_code != 200:
        raise SeedError(f"login {principal_id} -> {response.status_code}: {response.text}")
    return response.json()["token"]


def seed_demo(client, admin_id: str, admin_secret: str) -> dict:
    """Populate a fresh gateway. Idempotence is not attempted: seeding an
    already-seeded journal fails on the first duplicate."""
    admin_token = login(client, admin_id, admin_secret)

    for spec in DEMO_PRINCIPALS:
        _post(client, "/principals", admin_token,
              {**spec, "secret": DEMO_SECRETS[spec["name"]]})
    for user_id, supers in DEMO_PAIRS.items():
        _post(client, "/pairs", admin_token,
              {"user_id": user_id, "super_user_ids": supers})
    for patient_id in DEMO_PATIENTS:
        _post(client, "/patients", admin_token, {"patient_id": patient_id})

    doctor_token = login(client, "D", DEMO_SECRETS["D"])
    doc_ids = []
    for patient_id, doc_type, body in DEMO_DOCUMENTS:
        created = _post(client, f"/patients/{patient_id}/documents", doctor_token, {
            "doc_type": doc_type,
            "body_b64": base64.b64encode(body).decode("ascii"),
        })
        doc_ids.append(created["doc_id"])

    return {
        "principals": [p["name"] for p in DEMO_PRINCIPALS],
        "pairs": DEMO_PAIRS,
        "patients": DEMO_PATIENTS,
        "documents": doc_ids,
    }
