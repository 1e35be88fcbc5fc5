# Copyright (C) 2026 The utb-negf developers

# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation; version 3 of the License.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.

"""Point-to-point message transports between workers.

A frame on the wire is little-endian: u32 length of the rest of the frame,
u32 tuple index, u8 payload kind, u32 value count, then `count` complex
values as (re, im) f64 pairs.
"""

__all__ = [
    'Endpoint',
    'InProcessTransport',
    'Message',
    'PayloadKind',
    'SocketTransport',
    'TransportError',
    'decode_frame',
    'encode_frame',
    'get_transport',
    ]


import queue
import random
import socket
import struct
import logging
import threading
import numpy as np

from collections import namedtuple
from enum import IntEnum
from time import monotonic


log = logging.getLogger('utbnegf')

HEADER = struct.Struct('<IIBI')
LENGTH = struct.Struct('<I')
WIRE_DTYPE = np.dtype('<c16')
# Frame length field covers tuple index, kind and count.
BODY_HEADER_SIZE = HEADER.size - LENGTH.size


class PayloadKind(IntEnum):
    gr_diag = 0
    gl_diag = 1
    control = 2


Message = namedtuple('Message', 'sender tuple_index kind values')

# A peer's channel went away.
Closed = namedtuple('Closed', 'peer error')


class TransportError(Exception):
    """A message could not be delivered or did not arrive in time."""

    def __init__(self, task, cause):
        super().__init__(task, cause)
        self.task = task
        self.cause = cause

    def __str__(self):
        return ('transport failure while waiting for {0.task}: '
                '{0.cause}'.format(self))


def encode_frame(tuple_index, kind, values):
    values = np.ascontiguousarray(values, dtype=WIRE_DTYPE).ravel()
    body = values.tobytes()
    length = BODY_HEADER_SIZE + len(body)
    return HEADER.pack(length, tuple_index, int(kind), len(values)) + body


def decode_frame(frame):
    """Decode one complete frame, length prefix included.

    Returns (tuple_index, kind, values).
    """
    if len(frame) < HEADER.size:
        raise ValueError('short frame: {} bytes'.format(len(frame)))
    length, tuple_index, kind, count = HEADER.unpack_from(frame)
    if length != len(frame) - LENGTH.size:
        raise ValueError('frame length {} does not match {} bytes'.format(
            length, len(frame) - LENGTH.size))
    if count * WIRE_DTYPE.itemsize != length - BODY_HEADER_SIZE:
        raise ValueError('frame of {} values has {} payload bytes'.format(
            count, length - BODY_HEADER_SIZE))
    values = np.frombuffer(frame, dtype=WIRE_DTYPE, count=count,
                           offset=HEADER.size)
    return tuple_index, PayloadKind(kind), values.astype(complex)


class Endpoint:
    """One worker's view of the transport.

    Receives are keyed by (sender, tuple index, kind).  Messages that arrive
    before they are asked for wait in a mailbox, so the order in which a
    pair's messages arrive does not matter.
    """

    def __init__(self, rank, timeout):
        self.rank = rank
        self.timeout = timeout
        self._mailbox = {}
        self._closed = {}

    def send(self, receiver, tuple_index, kind, values):
        raise NotImplementedError                   # pragma: no cover

    def _next_message(self, timeout):
        """Return the next arrived Message or raise queue.Empty."""
        raise NotImplementedError                   # pragma: no cover

    def recv(self, sender, tuple_index, kind, task=None):
        key = (sender, tuple_index, PayloadKind(kind))
        deadline = monotonic() + self.timeout
        while key not in self._mailbox:
            if sender in self._closed:
                raise TransportError(task or key, self._closed[sender])
            remaining = deadline - monotonic()
            if remaining <= 0:
                raise TransportError(task or key, 'timed out')
            try:
                message = self._next_message(remaining)
            except queue.Empty:
                continue
            if isinstance(message, Closed):
                # Only fatal when we still need something from that peer.
                self._closed[message.peer] = message.error
                continue
            self._mailbox[
                (message.sender, message.tuple_index, message.kind)] = message
        return self._mailbox.pop(key).values

    def close(self):
        pass


class _InProcessEndpoint(Endpoint):
    def __init__(self, rank, transport):
        super().__init__(rank, transport.timeout)
        self._transport = transport

    def send(self, receiver, tuple_index, kind, values):
        # Frames go through the codec here too, so the in-process path
        # moves exactly the bytes the socket path would.
        frame = encode_frame(tuple_index, kind, values)
        self._transport._deliver(self.rank, receiver, frame)

    def _next_message(self, timeout):
        sender, frame = self._transport._inboxes[self.rank].get(
            timeout=timeout)
        tuple_index, kind, values = decode_frame(frame)
        return Message(sender, tuple_index, kind, values)


class InProcessTransport:
    """Queues between threads of one process.

    With `max_delay` > 0 every frame is held back for a random time up to
    that many seconds, so frames of one pair may arrive in any order.
    """

    def __init__(self, n_workers, *, timeout=60.0, max_delay=0.0, seed=None):
        self.n_workers = n_workers
        self.timeout = timeout
        self.max_delay = max_delay
        self._random = random.Random(seed)
        self._lock = threading.Lock()
        self._timers = []
        self._inboxes = [queue.Queue() for rank in range(n_workers)]

    def _deliver(self, sender, receiver, frame):
        inbox = self._inboxes[receiver]
        if self.max_delay <= 0:
            inbox.put((sender, frame))
            return
        with self._lock:
            delay = self._random.uniform(0, self.max_delay)
        timer = threading.Timer(delay, inbox.put, args=((sender, frame),))
        timer.daemon = True
        with self._lock:
            self._timers.append(timer)
        timer.start()

    def endpoint(self, rank):
        return _InProcessEndpoint(rank, self)

    def close(self):
        with self._lock:
            timers, self._timers = self._timers, []
        for timer in timers:
            timer.cancel()


def _read_exactly(sock, size):
    chunks = []
    while size > 0:
        chunk = sock.recv(size)
        if len(chunk) == 0:
            raise ConnectionError('peer closed the connection')
        chunks.append(chunk)
        size -= len(chunk)
    return b''.join(chunks)


def read_frame(sock):
    prefix = _read_exactly(sock, LENGTH.size)
    (length,) = LENGTH.unpack(prefix)
    return prefix + _read_exactly(sock, length)


class _SocketEndpoint(Endpoint):
    def __init__(self, rank, sockets, timeout):
        super().__init__(rank, timeout)
        # peer rank -> socket
        self._sockets = sockets
        self._inbox = queue.Queue()
        self._readers = []
        for peer, sock in sorted(sockets.items()):
            # Readers drain every socket continuously, so a blocked sendall()
            # on one side never waits on the other side's receive order.
            reader = threading.Thread(
                target=self._read_loop, args=(peer, sock),
                name='reader-{}-{}'.format(rank, peer), daemon=True)
            reader.start()
            self._readers.append(reader)

    def _read_loop(self, peer, sock):
        try:
            while True:
                tuple_index, kind, values = decode_frame(read_frame(sock))
                self._inbox.put(Message(peer, tuple_index, kind, values))
        except (OSError, ValueError) as error:
            self._inbox.put(Closed(peer, error))

    def send(self, receiver, tuple_index, kind, values):
        try:
            self._sockets[receiver].sendall(
                encode_frame(tuple_index, kind, values))
        except OSError as error:
            raise TransportError(
                (self.rank, receiver, tuple_index, PayloadKind(kind)),
                error) from None

    def _next_message(self, timeout):
        return self._inbox.get(timeout=timeout)

    def close(self):
        for sock in self._sockets.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()


class SocketTransport:
    """Local stream sockets between forked worker processes.

    The socket pairs are made before the workers fork; each worker then
    keeps only its own ends.
    """

    def __init__(self, n_workers, *, timeout=60.0):
        self.n_workers = n_workers
        self.timeout = timeout
        # (rank, peer) -> socket owned by rank
        self._ends = {}
        for a in range(n_workers):
            for b in range(a + 1, n_workers):
                end_a, end_b = socket.socketpair()
                self._ends[(a, b)] = end_a
                self._ends[(b, a)] = end_b

    def endpoint(self, rank):
        """Claim `rank`'s sockets and close everybody else's in this process.
        """
        mine = {}
        for (owner, peer), sock in self._ends.items():
            if owner == rank:
                mine[peer] = sock
            else:
                sock.close()
        self._ends = {}
        return _SocketEndpoint(rank, mine, self.timeout)

    def close(self):
        for sock in self._ends.values():
            sock.close()
        self._ends = {}


def get_transport(kind, n_workers, **kws):
    if kind == 'inprocess':
        return InProcessTransport(n_workers, **kws)
    elif kind == 'socket':
        kws.pop('max_delay', None)
        kws.pop('seed', None)
        return SocketTransport(n_workers, **kws)
    raise ValueError('unknown transport: {}'.format(kind))
