"""Corpus ingestion walkthrough: scrubbing, filtering, anonymous ids.

Feeds a handful of messy raw records through the full ingest pass and
shows what survives: PII replaced by placeholders, 5-25 word length gate,
exact-duplicate removal keeping the earliest copy, and salted anonymous
ids that are stable per source but unlinkable without the salt.
"""

from datetime import datetime, timezone

from toxipipe.corpus import RawRecord, ingest_records, scrub_pii, temporal_histogram


def raw(source_id, text, year):
    return RawRecord(
        source_id=source_id,
        author="someone",
        text=text,
        timestamp=datetime(year, 6, 1, tzinfo=timezone.utc),
        forum="demo",
    )


print("PII scrubbing, one line at a time:")
for text in [
    "écris-moi à jean@ex.fr ou appelle le 06 12 34 56 78",
    "voir https://t.co/x depuis 192.168.0.1",
    "@Kevin_du_93 t'as vu le match hier soir ?",
]:
    clean, report = scrub_pii(text)
    print(f"  {text}\n    -> {clean}   {report}")

records = [
    raw("m1", "franchement ce match était vraiment super hier soir", 2013),
    raw("m2", "trop court", 2014),
    raw("m3", "franchement ce match était vraiment super hier soir", 2011),  # dup, earlier
    raw("m4", "contacte jean@ex.fr pour les détails du tournoi demain", 2022),
    raw("m5", " ".join(["mot"] * 30), 2015),  # too long
]

comments, stats = ingest_records(records, salt=b"demo-salt")
print()
print(f"ingested={stats.ingested}  after_dedupe={stats.after_dedupe}  kept={stats.kept}")
print(f"dropped: short={stats.dropped_short} long={stats.dropped_long}")
print(f"redactions: {stats.redactions}")
print()
print("surviving records:")
for comment in comments:
    print(f"  {comment.id}  [{comment.timestamp:%Y}]  {comment.text}")
print()
print("temporal histogram:", temporal_histogram(comments, "year"))
