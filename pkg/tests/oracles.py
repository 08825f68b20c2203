"""Independent reference implementations used as test oracles.

Nothing here imports the package's codec or kernels.
"""


def be(value, width):
    return value.to_bytes(width, "big")


def build_data_frame(headers, payload):
    body = bytearray(be(len(headers), 2))
    for key, value in headers:
        k = key.encode()
        body += be(len(k), 1) + k + be(len(value), 2) + value
    body += be(len(payload), 4) + payload
    return bytes([0x01]) + be(len(body), 4) + bytes(body)


def build_hello_frame(name, stream_id):
    n = name.encode()
    body = be(len(n), 1) + n + be(stream_id, 8)
    return bytes([0x00]) + be(len(body), 4) + body


def gray_pixel(r, g, b):
    return (r + g + b) // 3


def grayscale_oracle(payload):
    out = bytearray()
    for i in range(0, len(payload), 3):
        a = gray_pixel(payload[i], payload[i + 1], payload[i + 2])
        out += bytes((a, a, a))
    return bytes(out)


def diff_oracle(a, b):
    count = 0
    for i in range(len(a)):
        if a[i] != b[i]:
            count += 1
    return count


def frame_delta_oracle(payloads):
    """Sequential reference for frame_delta over a list of payloads."""
    out = []
    prev = None
    for p in payloads:
        out.append(b"0" if prev is None else str(diff_oracle(prev, p)).encode())
        prev = p
    return out
