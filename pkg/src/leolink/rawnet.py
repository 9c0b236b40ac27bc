"""Raw-socket probe transport for live paths.

Implements the probe contract from :mod:`leolink.probe` on top of real
sockets.  Three probe protocols:

* ``icmp``: raw ICMP echo with the TTL pinned.  The echo sequence
  number varies per probe while a balance field in the payload keeps
  the ICMP checksum constant per flow, so per-flow load balancers
  (which hash type/code/checksum for ICMP) keep the path stable across
  a TTL ramp.
* ``udp``: a datagram with pinned TTL and a constant port pair per
  flow; replies arrive as ICMP errors on the raw socket.  A port
  unreachable means the probe reached the target host.
* ``tcp``: a connect attempt with pinned TTL.  SYN-ACK or RST both
  prove the target was reached; mid-path expiries surface through the
  kernel error queue, which carries the reporting router's address.
  This mode needs no raw socket.

ICMP and UDP modes need a raw ICMP socket (root or CAP_NET_RAW).  On
loopback the raw socket also sees our own outbound request, so the
receive loop filters by message type and echoes' identifiers before
matching.  One transport instance serves one probing thread; create a
transport per worker instead of sharing.

Only the pure packet builders and parsers are unit-tested by default;
socket paths are exercised by an opt-in loopback test.
"""
from __future__ import annotations

import errno
import os
import select
import socket
import struct
import time
from dataclasses import dataclass
from typing import Optional

from .probe import DEFAULT_PROBE_TIMEOUT_S, ProbeReply

ICMP_ECHO_REQUEST = 8
ICMP_ECHO_REPLY = 0
ICMP_DEST_UNREACH = 3
ICMP_TIME_EXCEEDED = 11
ICMP_PORT_UNREACH_CODE = 3

ICMP6_ECHO_REQUEST = 128
ICMP6_ECHO_REPLY = 129
ICMP6_TIME_EXCEEDED = 3
ICMP6_DEST_UNREACH = 1

# UDP probes use the classic traceroute destination port and a
# flow-derived source port, both held constant across a TTL ramp.
UDP_BASE_DST_PORT = 33434

PAYLOAD_LEN = 24  # bytes after the 8-byte ICMP header

# from linux/errqueue.h, for the tcp error-queue path
SO_EE_ORIGIN_ICMP = 2
IP_RECVERR = 11


class TransportUnavailableError(RuntimeError):
    """Raised when the needed socket cannot be created (privileges)."""


def _ones_sum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = 0
    for (word,) in struct.iter_unpack("!H", data):
        total += word
        total = (total & 0xFFFF) + (total >> 16)
    return total


def inet_checksum(data: bytes) -> int:
    """RFC 1071 ones-complement checksum."""
    return (~_ones_sum(data)) & 0xFFFF


def flow_checksum(flow_id: int) -> int:
    """Target ICMP checksum for a flow; nonzero and flow-stable."""
    return 0x8000 | (flow_id & 0x7FFF) | 0x0001


def flow_ident(flow_id: int) -> int:
    """ICMP identifier: distinguishes this process and flow."""
    return (os.getpid() & 0xFFFF) ^ ((flow_id * 0x9E37) & 0xFFFF)


def build_icmp_echo(ident: int, seq: int, flow_id: int,
                    payload_extra: bytes = b"") -> bytes:
    """Echo request whose checksum equals flow_checksum(flow_id).

    The last two payload bytes are a balance field chosen so the
    ones-complement sum cancels out to the per-flow target no matter
    what the sequence number or the rest of the payload holds.
    """
    target = flow_checksum(flow_id)
    payload = payload_extra[:PAYLOAD_LEN - 2]
    payload += b"\x00" * (PAYLOAD_LEN - 2 - len(payload))
    head = struct.pack("!BBHHH", ICMP_ECHO_REQUEST, 0, target,
                       ident & 0xFFFF, seq & 0xFFFF)
    # a valid packet's ones-complement sum is 0xFFFF; the balance field
    # absorbs whatever the variable parts contribute
    balance = (0xFFFF - _ones_sum(head + payload)) & 0xFFFF
    return head + payload + struct.pack("!H", balance)


def icmp_packet_checksum_valid(packet: bytes) -> bool:
    return inet_checksum(packet) == 0


@dataclass(frozen=True)
class ParsedIcmp:
    icmp_type: int
    code: int
    ident: Optional[int]        # echo id of ours, if recoverable
    seq: Optional[int]
    quoted_udp_ports: Optional[tuple[int, int]] = None


def _parse_inner(inner: bytes) -> tuple[Optional[int], Optional[int], Optional[tuple[int, int]]]:
    """Pull our identifiers out of the quoted original datagram."""
    if len(inner) < 20:
        return None, None, None
    ihl = (inner[0] & 0x0F) * 4
    proto = inner[9]
    body = inner[ihl:]
    if proto == socket.IPPROTO_ICMP and len(body) >= 8:
        _t, _c, _ck, ident, seq = struct.unpack("!BBHHH", body[:8])
        return ident, seq, None
    if proto == socket.IPPROTO_UDP and len(body) >= 4:
        sport, dport = struct.unpack("!HH", body[:4])
        return None, None, (sport, dport)
    return None, None, None


def parse_icmp_v4(datagram: bytes) -> Optional[ParsedIcmp]:
    """Parse a raw AF_INET ICMP datagram (includes the IP header)."""
    if len(datagram) < 28:
        return None
    ihl = (datagram[0] & 0x0F) * 4
    icmp = datagram[ihl:]
    if len(icmp) < 8:
        return None
    icmp_type, code, _cksum, a, b = struct.unpack("!BBHHH", icmp[:8])
    if icmp_type == ICMP_ECHO_REPLY:
        return ParsedIcmp(icmp_type, code, ident=a, seq=b)
    if icmp_type in (ICMP_TIME_EXCEEDED, ICMP_DEST_UNREACH):
        ident, seq, ports = _parse_inner(icmp[8:])
        return ParsedIcmp(icmp_type, code, ident=ident, seq=seq,
                          quoted_udp_ports=ports)
    return None


def parse_icmp_v6(datagram: bytes) -> Optional[ParsedIcmp]:
    """Parse an AF_INET6 ICMPv6 datagram (no IP header included)."""
    if len(datagram) < 8:
        return None
    icmp_type, code, _cksum, a, b = struct.unpack("!BBHHH", datagram[:8])
    if icmp_type == ICMP6_ECHO_REPLY:
        return ParsedIcmp(icmp_type, code, ident=a, seq=b)
    if icmp_type in (ICMP6_TIME_EXCEEDED, ICMP6_DEST_UNREACH):
        inner = datagram[8:]
        # quoted IPv6 header is fixed 40 bytes; next header at offset 6
        if len(inner) >= 48 and inner[6] == socket.IPPROTO_ICMPV6:
            _t, _c, _ck, ident, seq = struct.unpack("!BBHHH", inner[40:48])
            return ParsedIcmp(icmp_type, code, ident=ident, seq=seq)
        return ParsedIcmp(icmp_type, code, ident=None, seq=None)
    return None


def udp_src_port(flow_id: int) -> int:
    return 33000 + (flow_id % 512)


class RawTransport:
    """Live-network transport; one instance per probing thread."""

    def __init__(self) -> None:
        self._seq = 0
        self.probes_sent = 0
        self._icmp4: Optional[socket.socket] = None
        self._icmp6: Optional[socket.socket] = None

    # -- clock -----------------------------------------------------------
    def now_ms(self) -> int:
        return time.monotonic_ns() // 1_000_000

    def sleep_until_ms(self, t_ms: int) -> None:
        delta = (t_ms - self.now_ms()) / 1000.0
        if delta > 0:
            time.sleep(delta)

    # -- sockets ---------------------------------------------------------
    def _icmp_sock(self, family: int) -> socket.socket:
        if family == socket.AF_INET:
            if self._icmp4 is None:
                self._icmp4 = self._open_raw(socket.AF_INET, socket.IPPROTO_ICMP)
            return self._icmp4
        if self._icmp6 is None:
            self._icmp6 = self._open_raw(socket.AF_INET6, socket.IPPROTO_ICMPV6)
        return self._icmp6

    @staticmethod
    def _open_raw(family: int, proto: int) -> socket.socket:
        try:
            sock = socket.socket(family, socket.SOCK_RAW, proto)
        except PermissionError as exc:
            raise TransportUnavailableError(
                "raw ICMP socket needs root or CAP_NET_RAW") from exc
        sock.setblocking(False)
        return sock

    def close(self) -> None:
        for sock in (self._icmp4, self._icmp6):
            if sock is not None:
                sock.close()
        self._icmp4 = self._icmp6 = None

    def __enter__(self) -> "RawTransport":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- probing ---------------------------------------------------------
    def probe(self, target: str, ttl: int, *, protocol: str = "icmp",
              flow_id: int = 0,
              timeout_s: float = DEFAULT_PROBE_TIMEOUT_S) -> Optional[ProbeReply]:
        family = socket.AF_INET6 if ":" in target else socket.AF_INET
        self.probes_sent += 1
        if protocol == "icmp":
            return self._probe_icmp(target, family, ttl, flow_id, timeout_s)
        if protocol == "udp":
            if family == socket.AF_INET6:
                raise TransportUnavailableError("udp probes are v4-only here")
            return self._probe_udp(target, ttl, flow_id, timeout_s)
        if protocol == "tcp":
            if family == socket.AF_INET6:
                raise TransportUnavailableError("tcp probes are v4-only here")
            return self._probe_tcp(target, ttl, flow_id, timeout_s)
        raise ValueError(f"unknown protocol: {protocol}")

    def _probe_icmp(self, target: str, family: int, ttl: int,
                    flow_id: int, timeout_s: float) -> Optional[ProbeReply]:
        sock = self._icmp_sock(family)
        if family == socket.AF_INET:
            sock.setsockopt(socket.IPPROTO_IP, socket.IP_TTL, ttl)
        else:
            sock.setsockopt(socket.IPPROTO_IPV6, socket.IPV6_UNICAST_HOPS, ttl)
        self._seq = (self._seq + 1) & 0xFFFF
        seq = self._seq
        ident = flow_ident(flow_id)
        stamp = struct.pack("!Q", time.monotonic_ns() & (2**64 - 1))
        if family == socket.AF_INET:
            packet = build_icmp_echo(ident, seq, flow_id, payload_extra=stamp)
        else:
            # the v6 kernel fills the checksum; flow stability relies on
            # constant addresses and identifier instead of balancing
            packet = struct.pack("!BBHHH", ICMP6_ECHO_REQUEST, 0, 0,
                                 ident, seq) + stamp + b"\x00" * (PAYLOAD_LEN - 8)
        t0 = time.monotonic_ns()
        sock.sendto(packet, (target, 0))
        deadline = t0 + int(timeout_s * 1e9)
        parse = parse_icmp_v4 if family == socket.AF_INET else parse_icmp_v6
        reply_type = ICMP_ECHO_REPLY if family == socket.AF_INET else ICMP6_ECHO_REPLY
        exceeded = ICMP_TIME_EXCEEDED if family == socket.AF_INET else ICMP6_TIME_EXCEEDED
        while True:
            remaining = (deadline - time.monotonic_ns()) / 1e9
            if remaining <= 0:
                return None
            ready, _, _ = select.select([sock], [], [], remaining)
            if not ready:
                return None
            try:
                data, addr = sock.recvfrom(4096)
            except BlockingIOError:
                continue
            t1 = time.monotonic_ns()
            parsed = parse(data)
            if parsed is None or parsed.ident != ident or parsed.seq != seq:
                continue  # someone else's traffic, or our own request echoed back
            rtt_us = (t1 - t0) / 1000.0
            if parsed.icmp_type == reply_type:
                return ProbeReply(responder=addr[0], rtt_us=rtt_us, kind="echo")
            if parsed.icmp_type == exceeded:
                return ProbeReply(responder=addr[0], rtt_us=rtt_us, kind="ttl_expired")
            # unreachable: the path ends here; report the reporter
            return ProbeReply(responder=addr[0], rtt_us=rtt_us, kind="ttl_expired")

    def _probe_udp(self, target: str, ttl: int, flow_id: int,
                   timeout_s: float) -> Optional[ProbeReply]:
        icmp = self._icmp_sock(socket.AF_INET)
        sport, dport = udp_src_port(flow_id), UDP_BASE_DST_PORT
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as udp:
            udp.setsockopt(socket.IPPROTO_IP, socket.IP_TTL, ttl)
            try:
                udp.bind(("", sport))
            except OSError:
                pass  # port taken; flow id still stable via dport + addresses
            t0 = time.monotonic_ns()
            udp.sendto(b"\x00" * 8, (target, dport))
            deadline = t0 + int(timeout_s * 1e9)
            while True:
                remaining = (deadline - time.monotonic_ns()) / 1e9
                if remaining <= 0:
                    return None
                ready, _, _ = select.select([icmp], [], [], remaining)
                if not ready:
                    return None
                try:
                    data, addr = icmp.recvfrom(4096)
                except BlockingIOError:
                    continue
                t1 = time.monotonic_ns()
                parsed = parse_icmp_v4(data)
                if parsed is None or parsed.quoted_udp_ports is None:
                    continue
                if parsed.quoted_udp_ports != (sport, dport):
                    continue
                rtt_us = (t1 - t0) / 1000.0
                if (parsed.icmp_type == ICMP_DEST_UNREACH
                        and parsed.code == ICMP_PORT_UNREACH_CODE):
                    return ProbeReply(responder=addr[0], rtt_us=rtt_us, kind="echo")
                if parsed.icmp_type == ICMP_TIME_EXCEEDED:
                    return ProbeReply(responder=addr[0], rtt_us=rtt_us,
                                      kind="ttl_expired")

    def _probe_tcp(self, target: str, ttl: int, flow_id: int,
                   timeout_s: float, port: int = 443) -> Optional[ProbeReply]:
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
            sock.setsockopt(socket.IPPROTO_IP, socket.IP_TTL, ttl)
            sock.setsockopt(socket.IPPROTO_IP, IP_RECVERR, 1)
            sock.setblocking(False)
            t0 = time.monotonic_ns()
            rc = sock.connect_ex((target, port))
            if rc not in (0, errno.EINPROGRESS):
                return None
            deadline = t0 + int(timeout_s * 1e9)
            while True:
                remaining = (deadline - time.monotonic_ns()) / 1e9
                if remaining <= 0:
                    return None
                _, writable, _ = select.select([], [sock], [], remaining)
                if not writable:
                    continue
                t1 = time.monotonic_ns()
                err = sock.getsockopt(socket.SOL_SOCKET, socket.SO_ERROR)
                rtt_us = (t1 - t0) / 1000.0
                if err == 0 or err == errno.ECONNREFUSED:
                    # SYN-ACK or RST: the target answered either way
                    return ProbeReply(responder=target, rtt_us=rtt_us, kind="echo")
                if err in (errno.EHOSTUNREACH, errno.ENETUNREACH):
                    responder = self._errqueue_offender(sock) or ""
                    if responder:
                        return ProbeReply(responder=responder, rtt_us=rtt_us,
                                          kind="ttl_expired")
                    return None
                return None

    @staticmethod
    def _errqueue_offender(sock: socket.socket) -> Optional[str]:
        """Router that reported the ICMP error, from the error queue."""
        try:
            _, ancdata, _, _ = sock.recvmsg(0, 512, socket.MSG_ERRQUEUE)
        except OSError:
            return None
        for level, ctype, cdata in ancdata:
            if level == socket.IPPROTO_IP and ctype == IP_RECVERR:
                # struct sock_extended_err: errno u32, origin u8 at
                # offset 4; the offending sockaddr_in follows at 16
                if len(cdata) >= 16 + 8 and cdata[4] == SO_EE_ORIGIN_ICMP:
                    addr_bytes = cdata[16 + 4:16 + 8]
                    return socket.inet_ntoa(addr_bytes)
        return None
