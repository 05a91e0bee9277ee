// Copyright 2026 The vcred Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Thin blocking TCP layer: dial, listen, read-fully/write-fully with
// deadlines. Every outbound connection passes through a process-global dial
// observer so tests can prove a scenario never left the loopback.

#ifndef VCRED_NET_HPP
#define VCRED_NET_HPP

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <utility>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "vcred/encoding.hpp"

namespace vcred {

class NetError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public NetError {
public:
    using NetError::NetError;
};

// Observer invoked with "host:port" for every dial() call. Only for test
// instrumentation; never used for control flow.
inline std::function<void(const std::string&)>& dialObserver() {
    static std::function<void(const std::string&)> obs;
    return obs;
}

inline std::pair<std::string, std::uint16_t> splitEndpoint(const std::string& endpoint) {
    std::size_t colon = endpoint.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == endpoint.size())
        throw NetError("endpoint must be host:port, got \"" + endpoint + "\"");
    int port = 0;
    try {
        port = std::stoi(endpoint.substr(colon + 1));
    } catch (...) {
        throw NetError("bad port in endpoint \"" + endpoint + "\"");
    }
    if (port < 1 || port > 65535) throw NetError("bad port in endpoint \"" + endpoint + "\"");
    return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    // Send/receive deadline for all subsequent operations.
    void setTimeout(int millis) const {
        timeval tv{};
        tv.tv_sec = millis / 1000;
        tv.tv_usec = (millis % 1000) * 1000;
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
        ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    }

    void readFully(std::uint8_t* buf, std::size_t n) const {
        std::size_t got = 0;
        while (got < n) {
            ssize_t r = ::recv(fd_, buf + got, n - got, 0);
            if (r == 0) throw NetError("connection closed by peer");
            if (r < 0) {
                if (errno == EINTR) continue;
                if (errno == EAGAIN || errno == EWOULDBLOCK) throw TimeoutError("read timed out");
                throw NetError(std::string("read failed: ") + std::strerror(errno));
            }
            got += static_cast<std::size_t>(r);
        }
    }

    void writeFully(const std::uint8_t* buf, std::size_t n) const {
        std::size_t sent = 0;
        while (sent < n) {
            ssize_t r = ::send(fd_, buf + sent, n - sent, MSG_NOSIGNAL);
            if (r < 0) {
                if (errno == EINTR) continue;
                if (errno == EAGAIN || errno == EWOULDBLOCK) throw TimeoutError("write timed out");
                throw NetError(std::string("write failed: ") + std::strerror(errno));
            }
            sent += static_cast<std::size_t>(r);
        }
    }

private:
    int fd_ = -1;
};

inline Socket dial(const std::string& endpoint, int timeoutMillis = 10000) {
    if (auto& obs = dialObserver()) obs(endpoint);
    auto [host, port] = splitEndpoint(endpoint);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0)
        throw NetError("cannot resolve \"" + host + "\"");
    int fd = -1;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw NetError("cannot connect to " + endpoint);
    Socket s(fd);
    s.setTimeout(timeoutMillis);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

class Listener {
public:
    Listener() = default;
    ~Listener() { close(); }
    Listener(Listener&& o) noexcept
        : fd_(std::exchange(o.fd_, -1)), endpoint_(std::move(o.endpoint_)) {}
    Listener& operator=(Listener&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = std::exchange(o.fd_, -1);
            endpoint_ = std::move(o.endpoint_);
        }
        return *this;
    }
    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;

    // host defaults to loopback; port 0 picks a free one.
    static Listener listen(const std::string& host = "127.0.0.1", std::uint16_t port = 0) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw NetError("cannot create socket");
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw NetError("listen host must be an IPv4 address, got \"" + host + "\"");
        }
        if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
            ::listen(fd, 64) != 0) {
            ::close(fd);
            throw NetError("cannot listen on " + host + ":" + std::to_string(port));
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        Listener l;
        l.fd_ = fd;
        l.endpoint_ = host + ":" + std::to_string(ntohs(addr.sin_port));
        return l;
    }

    // Blocks; throws NetError once close() is called from another thread.
    Socket accept() const {
        int fd = ::accept(fd_, nullptr, nullptr);
        if (fd < 0) throw NetError(std::string("accept failed: ") + std::strerror(errno));
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return Socket(fd);
    }

    const std::string& endpoint() const { return endpoint_; }
    bool valid() const { return fd_ >= 0; }

    void close() {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
    std::string endpoint_;
};

}  // namespace vcred

#endif  // VCRED_NET_HPP
