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
// Append-only audit log of access attempts: who (full blessing names, which
// carry the whole delegation trail), what, when, and how it was decided.
// Denied attempts are recorded with the same fidelity as allowed ones — an
// out-of-schedule access attempt is precisely the event the owner wants to
// see. One canonical-encoded record per line, base64url, so the file stays
// greppable and append-safe.

#ifndef VCRED_AUDIT_HPP
#define VCRED_AUDIT_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "vcred/crypto.hpp"
#include "vcred/store.hpp"

namespace vcred {

enum class Decision : std::uint8_t {
    Allowed = 0,
    DeniedCaveat = 1,        // valid chain, recognized root, a caveat failed
    DeniedACL = 2,           // validated name, but the method ACL said no
    DeniedUnrecognized = 3,  // chain invalid or root not recognized
};

inline std::string_view decisionName(Decision d) {
    switch (d) {
        case Decision::Allowed: return "allowed";
        case Decision::DeniedCaveat: return "denied-caveat";
        case Decision::DeniedACL: return "denied-acl";
        case Decision::DeniedUnrecognized: return "denied-unrecognized";
    }
    return "unknown";
}

struct AuditRecord {
    std::int64_t time = 0;
    std::string method;
    std::vector<std::string> peerBlessingNames;  // as presented, valid or not
    Decision decision = Decision::DeniedUnrecognized;

    bool operator==(const AuditRecord&) const = default;
};

inline void encodeValue(Writer& w, const AuditRecord& r) {
    w.i64(r.time);
    w.stringField(r.method);
    encodeValue(w, r.peerBlessingNames);
    w.u8(static_cast<std::uint8_t>(r.decision));
}

inline AuditRecord decodeAuditRecord(ByteView data) {
    Reader r(data);
    AuditRecord rec;
    rec.time = r.i64();
    rec.method = r.stringField();
    std::uint32_t n = r.count();
    for (std::uint32_t i = 0; i < n; ++i) rec.peerBlessingNames.push_back(r.stringField());
    std::uint8_t d = r.u8();
    if (d > 3) throw EncodingError("unknown audit decision");
    rec.decision = static_cast<Decision>(d);
    r.expectEnd();
    return rec;
}

inline std::string auditLine(const AuditRecord& rec) {
    return base64urlEncode(canonicalEncode(rec));
}

class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(std::filesystem::path path) : path_(std::move(path)) {}

    const std::filesystem::path& path() const { return path_; }
    bool enabled() const { return !path_.empty(); }

    void append(const AuditRecord& rec) {
        if (!enabled()) return;
        std::lock_guard lock(mu_);
        std::ofstream out(path_, std::ios::app);
        if (!out) throw IoError("cannot append to audit log " + path_.string());
        out << auditLine(rec) << '\n';
        if (!out.flush()) throw IoError("audit log write failed");
    }

    std::vector<AuditRecord> readSince(std::int64_t since) const {
        std::vector<AuditRecord> out;
        if (!enabled() || !std::filesystem::exists(path_)) return out;
        std::ifstream in(path_);
        for (std::string line; std::getline(in, line);) {
            if (line.empty()) continue;
            AuditRecord rec = decodeAuditRecord(base64urlDecode(line));
            if (rec.time >= since) out.push_back(std::move(rec));
        }
        return out;
    }

    std::vector<AuditRecord> readAll() const {
        return readSince(std::numeric_limits<std::int64_t>::min());
    }

private:
    std::filesystem::path path_;
    std::mutex mu_;
};

}  // namespace vcred

#endif  // VCRED_AUDIT_HPP
