"""Mongoengine definition for storing run history"""
from datetime import datetime

from mongoengine import DateTimeField, DictField, Document, IntField, ListField, StringField


class RunDoc(Document):
    """One command-line run"""
    command = StringField(required=True)
    config_hash = StringField(required=True)
    seed = IntField()
    version = StringField()
    output_dir = StringField()
    outputs = ListField(StringField())
    timings = DictField()
    created = DateTimeField(default=datetime.utcnow)

    meta = {'indexes': ['config_hash']}
