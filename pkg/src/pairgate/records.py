"""Immutable document store with patient-directed controls.

Documents are opaque byte bodies, write-once. Patients cannot edit a stored
document; they can tombstone it (reads behave as deletion, the journal keeps
the evidence) or restrict specific staff from their record entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from pairgate import errors


class DocClass(str, Enum):
    CLINICAL = "clinical"
    ADMINISTRATIVE = "administrative"


class DocType(str, Enum):
    SHS = "shs"
    ES = "es"
    CLINICAL_NOTE = "clinical_note"
    DEMOGRAPHICS = "demographics"
    BILLING = "billing"


_CLINICAL_TYPES = frozenset({DocType.SHS, DocType.ES, DocType.CLINICAL_NOTE})


def doc_class_for(doc_type: DocType) -> DocClass:
    return DocClass.CLINICAL if doc_type in _CLINICAL_TYPES else DocClass.ADMINISTRATIVE


@dataclass(frozen=True)
class Document:
    doc_id: str
    patient_id: str
    doc_class: DocClass
    doc_type: DocType
    author_id: str
    created_at_us: int
    body: bytes
    removed: bool = False

    def meta_view(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "patient_id": self.patient_id,
            "doc_class": self.doc_class.value,
            "doc_type": self.doc_type.value,
            "author_id": self.author_id,
            "created_at_us": self.created_at_us,
            "removed": self.removed,
        }


@dataclass(frozen=True)
class PatientRestriction:
    patient_id: str
    blocked_principal_ids: frozenset
    blocked_doc_ids: frozenset


_EMPTY = frozenset()


@dataclass
class RecordStore:
    patients: set = field(default_factory=set)
    documents: dict = field(default_factory=dict)
    restrictions: dict = field(default_factory=dict)

    # -- lookups ----------------------------------------------------------------

    def get_visible(self, doc_id: str) -> Document:
        doc = self.documents.get(doc_id)
        if doc is None or doc.removed:
            raise errors.NotFound(f"no document {doc_id!r}")
        return doc

    def restriction_for(self, patient_id: str) -> PatientRestriction:
        return self.restrictions.get(
            patient_id, PatientRestriction(patient_id, _EMPTY, _EMPTY))

    # -- validation ---------------------------------------------------------------

    def validate_patient(self, patient_id: str) -> None:
        if patient_id not in self.patients:
            raise errors.UnknownPatient(f"no patient {patient_id!r}")

    def validate_register_patient(self, patient_id: str) -> None:
        if not patient_id or len(patient_id) > 64:
            raise errors.ValidationFailure("patient id must be 1..64 characters")
        if patient_id in self.patients:
            raise errors.DuplicateId(f"patient {patient_id!r} already exists")

    def validate_remove(self, patient_id: str, doc_id: str) -> Document:
        doc = self.documents.get(doc_id)
        if doc is None:
            raise errors.UnknownDocument(f"no document {doc_id!r}")
        if doc.patient_id != patient_id:
            raise errors.NotOwner(f"document {doc_id!r} belongs to another patient")
        if doc.removed:
            raise errors.AlreadyRemoved(f"document {doc_id!r} already removed")
        return doc

    def validate_restriction(self, patient_id: str, blocked_docs) -> None:
        self.validate_patient(patient_id)
        for doc_id in blocked_docs:
            doc = self.documents.get(doc_id)
            if doc is None:
                raise errors.UnknownDocument(f"no document {doc_id!r}")
            if doc.patient_id != patient_id:
                raise errors.NotOwner(f"document {doc_id!r} belongs to another patient")

    # -- event application ----------------------------------------------------------

    def apply_patient_registered(self, patient_id: str) -> None:
        self.patients.add(patient_id)

    def apply_uploaded(self, doc: Document) -> None:
        self.documents[doc.doc_id] = doc

    def apply_removed(self, doc_id: str) -> None:
        self.documents[doc_id] = replace(self.documents[doc_id], removed=True)

    def apply_restriction(self, restriction: PatientRestriction) -> None:
        self.restrictions[restriction.patient_id] = restriction
