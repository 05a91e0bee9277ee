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
// The blessing store: a principal's "cookie jar" of acquired blessings. Each
// entry is tagged with a peer pattern saying to whom the blessing may be
// shown — Bob stores Alice/Houseguest/Bob with peer pattern Alice, and no
// other service ever learns he holds it. Selection is by group-free pattern
// match so it works with no network at all.

#ifndef VCRED_STORE_HPP
#define VCRED_STORE_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <sys/stat.h>
#include <unistd.h>

#include "vcred/blessing.hpp"
#include "vcred/clock.hpp"

namespace vcred {

class IoError : public Error {
public:
    using Error::Error;
};

// ---- Small file helpers (atomic replace-on-write) ----

inline Bytes readFileBytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline std::string readFileText(const std::filesystem::path& p) {
    Bytes b = readFileBytes(p);
    return std::string(b.begin(), b.end());
}

inline void writeFileAtomic(const std::filesystem::path& p, ByteView data, mode_t mode = 0644) {
    std::filesystem::path tmp = p;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
        if (!out.flush()) throw IoError("write failed for " + tmp.string());
    }
    if (::chmod(tmp.c_str(), mode) != 0) throw IoError("chmod failed for " + tmp.string());
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("rename failed for " + p.string() + ": " + ec.message());
    }
}

inline void writeFileAtomic(const std::filesystem::path& p, std::string_view text,
                            mode_t mode = 0644) {
    writeFileAtomic(p, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()),
                    mode);
}

// ---- Root set persistence ----

inline constexpr std::uint8_t kRootsFileVersion = 0x01;

inline Bytes encodeRootSet(const RootSet& roots) {
    Writer w;
    w.u8(kRootsFileVersion);
    w.count(roots.entries().size());
    for (const auto& r : roots.entries()) {
        w.stringField(r.name);
        w.bytesField(r.key.der);
    }
    return w.take();
}

inline RootSet decodeRootSet(ByteView data) {
    Reader r(data);
    if (r.u8() != kRootsFileVersion) throw EncodingError("unknown roots file version");
    std::uint32_t n = r.count();
    RootSet out;
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.stringField();
        PublicKey pk{r.bytesField()};
        out.add(Root{std::move(name), std::move(pk)});
    }
    r.expectEnd();
    return out;
}

// ---- Blessing store ----

inline constexpr std::uint8_t kStoreFileVersion = 0x01;
inline constexpr std::uint32_t kNoDefault = 0xffffffff;

class BlessingStore {
public:
    struct Entry {
        Blessing blessing;
        BlessingPattern peerPattern;
        std::string label;
        std::int64_t acquiredAt = 0;

        bool operator==(const Entry&) const = default;
    };

    BlessingStore() = default;
    explicit BlessingStore(PublicKey owner) : owner_(std::move(owner)) {}

    const PublicKey& owner() const { return owner_; }
    const std::vector<Entry>& entries() const { return entries_; }
    bool operator==(const BlessingStore&) const = default;

    // Appends an entry. The blessing must verify and be bound to the owning
    // principal's key — a store never holds someone else's credentials — and
    // the peer pattern must be usable offline, i.e. group-free.
    std::size_t add(Blessing b, BlessingPattern peerPattern, std::string label,
                    std::int64_t acquiredAt = systemNow()) {
        if (!verifyCerts(b)) throw Error("blessing chain does not verify");
        if (!(boundKey(b) == owner_)) throw Error("blessing is bound to a different key");
        if (!peerPattern.isGroupFree()) throw ParseError("peer patterns must not contain groups");
        if (peerPattern.components.empty()) throw ParseError("empty peer pattern");
        entries_.push_back(Entry{std::move(b), std::move(peerPattern), std::move(label), acquiredAt});
        return entries_.size() - 1;
    }

    void setDefault(std::size_t index) {
        if (index >= entries_.size()) throw Error("no such store entry");
        defaultIndex_ = static_cast<std::uint32_t>(index);
    }
    void clearDefault() { defaultIndex_ = kNoDefault; }
    std::optional<std::size_t> defaultIndex() const {
        if (defaultIndex_ == kNoDefault) return std::nullopt;
        return defaultIndex_;
    }

    std::optional<Blessing> defaultBlessing() const {
        if (defaultIndex_ == kNoDefault) return std::nullopt;
        return entries_[defaultIndex_].blessing;
    }

    // The default blessing, but only if it is marked presentable to anyone.
    // This is what gets shown to a peer that offered no recognizable name.
    std::optional<Blessing> defaultForUnknownPeer() const {
        if (defaultIndex_ == kNoDefault) return std::nullopt;
        const Entry& e = entries_[defaultIndex_];
        if (!e.peerPattern.isUniversal()) return std::nullopt;
        return e.blessing;
    }

    // All blessings whose peer pattern matches at least one of the peer's
    // names, ordered by (acquiredAt, label) for determinism.
    std::vector<Blessing> selectForPeer(std::span<const std::string> peerNames) const {
        std::vector<const Entry*> picked;
        for (const auto& e : entries_) {
            bool match = false;
            for (const auto& pn : peerNames) {
                try {
                    if (matchPattern(e.peerPattern, pn, nullResolver(), Mode::Under)) {
                        match = true;
                        break;
                    }
                } catch (const Error&) {
                    // unparseable peer name: no match
                }
            }
            if (match) picked.push_back(&e);
        }
        std::stable_sort(picked.begin(), picked.end(), [](const Entry* a, const Entry* b) {
            if (a->acquiredAt != b->acquiredAt) return a->acquiredAt < b->acquiredAt;
            return a->label < b->label;
        });
        std::vector<Blessing> out;
        out.reserve(picked.size());
        for (const Entry* e : picked) out.push_back(e->blessing);
        return out;
    }

    Bytes encode() const {
        Writer w;
        w.u8(kStoreFileVersion);
        w.bytesField(owner_.der);
        w.u32(defaultIndex_);
        w.count(entries_.size());
        for (const auto& e : entries_) {
            w.bytesField(encodeBlessing(e.blessing));
            w.stringField(e.peerPattern.text());
            w.stringField(e.label);
            w.i64(e.acquiredAt);
        }
        return w.take();
    }

    static BlessingStore decode(ByteView data) {
        Reader r(data);
        if (r.u8() != kStoreFileVersion) throw EncodingError("unknown store file version");
        BlessingStore s{PublicKey{r.bytesField()}};
        std::uint32_t def = r.u32();
        std::uint32_t n = r.count();
        for (std::uint32_t i = 0; i < n; ++i) {
            Entry e;
            e.blessing = decodeBlessing(r.bytesField());
            e.peerPattern = BlessingPattern::parse(r.stringField());
            e.label = r.stringField();
            e.acquiredAt = r.i64();
            s.entries_.push_back(std::move(e));
        }
        r.expectEnd();
        if (def != kNoDefault && def >= n) throw EncodingError("default index out of range");
        s.defaultIndex_ = def;
        return s;
    }

private:
    PublicKey owner_;
    std::vector<Entry> entries_;
    std::uint32_t defaultIndex_ = kNoDefault;
};

}  // namespace vcred

#endif  // VCRED_STORE_HPP
