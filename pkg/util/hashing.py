import hashlib


def file_digest(in_path: str) -> str:
    h = hashlib.sha256()
    with open(in_path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            h.update(block)
    return h.hexdigest()

