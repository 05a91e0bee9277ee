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

#ifndef VCRED_ENCODING_HPP
#define VCRED_ENCODING_HPP

#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vcred {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EncodingError : public Error {
public:
    using Error::Error;
};

// Canonical byte encoding used for everything that is signed or hashed.
// Scalar fields are 4-byte big-endian length prefixed, lists are 4-byte
// big-endian count prefixed, integers are fixed-width big-endian, text is
// UTF-8. Field order is the declared order of the type.
class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }

    void u32(std::uint32_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v >> 24));
        buf_.push_back(static_cast<std::uint8_t>(v >> 16));
        buf_.push_back(static_cast<std::uint8_t>(v >> 8));
        buf_.push_back(static_cast<std::uint8_t>(v));
    }

    void i64(std::int64_t v) {
        auto u = static_cast<std::uint64_t>(v);
        for (int shift = 56; shift >= 0; shift -= 8)
            buf_.push_back(static_cast<std::uint8_t>(u >> shift));
    }

    void raw(ByteView b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    void bytesField(ByteView b) {
        if (b.size() > 0xffffffffu) throw EncodingError("field too large");
        u32(static_cast<std::uint32_t>(b.size()));
        raw(b);
    }

    void stringField(std::string_view s) {
        bytesField(ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }

    void count(std::size_t n) {
        if (n > 0xffffffffu) throw EncodingError("list too long");
        u32(static_cast<std::uint32_t>(n));
    }

    const Bytes& data() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

class Reader {
public:
    explicit Reader(ByteView b) : buf_(b) {}

    // Owning overload: a Reader constructed straight from a temporary (say,
    // another reader's bytesField()) keeps the bytes alive itself.
    explicit Reader(Bytes&& owned) : own_(std::move(owned)), buf_(own_) {}

    Reader(const Reader&) = delete;
    Reader& operator=(const Reader&) = delete;

    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = (std::uint32_t(buf_[pos_]) << 24) | (std::uint32_t(buf_[pos_ + 1]) << 16) |
                          (std::uint32_t(buf_[pos_ + 2]) << 8) | std::uint32_t(buf_[pos_ + 3]);
        pos_ += 4;
        return v;
    }

    std::int64_t i64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = (v << 8) | buf_[pos_++];
        return static_cast<std::int64_t>(v);
    }

    Bytes bytesField() {
        std::uint32_t n = u32();
        need(n);
        Bytes out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return out;
    }

    std::string stringField() {
        Bytes b = bytesField();
        return std::string(b.begin(), b.end());
    }

    std::uint32_t count() { return u32(); }

    bool done() const { return pos_ == buf_.size(); }

    void expectEnd() const {
        if (!done()) throw EncodingError("trailing bytes after value");
    }

    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw EncodingError("truncated value");
    }

    Bytes own_;
    ByteView buf_;
    std::size_t pos_ = 0;
};

inline Bytes toBytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

// Unpadded base64url, the printable form for keys, blessings and audit records.
inline std::string base64urlEncode(ByteView in) {
    static const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= in.size(); i += 3) {
        std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
    }
    if (in.size() - i == 1) {
        std::uint32_t v = in[i] << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
    } else if (in.size() - i == 2) {
        std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
    }
    return out;
}

inline Bytes base64urlDecode(std::string_view in) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '-') return 62;
        if (c == '_') return 63;
        return -1;
    };
    if (in.size() % 4 == 1) throw EncodingError("bad base64url length");
    Bytes out;
    out.reserve(in.size() / 4 * 3 + 2);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char c : in) {
        int v = val(c);
        if (v < 0) throw EncodingError("bad base64url character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
        }
    }
    if (bits > 0 && (acc & ((1u << bits) - 1)) != 0) throw EncodingError("bad base64url padding bits");
    return out;
}

inline std::string hexEncode(ByteView in) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(in.size() * 2);
    for (std::uint8_t b : in) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 15]);
    }
    return out;
}

inline Bytes hexDecode(std::string_view in) {
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (in.size() % 2 != 0) throw EncodingError("odd hex length");
    Bytes out;
    out.reserve(in.size() / 2);
    for (std::size_t i = 0; i < in.size(); i += 2) {
        int hi = nib(in[i]), lo = nib(in[i + 1]);
        if (hi < 0 || lo < 0) throw EncodingError("bad hex character");
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

}  // namespace vcred

#endif  // VCRED_ENCODING_HPP
