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

// Test fixtures shared by the unit suite and the acceptance binary. Keep this
// header framework-free: it is included from programs that do not link any
// test framework.

#ifndef VCRED_TESTS_HELPERS_HPP
#define VCRED_TESTS_HELPERS_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vcred/vcred.hpp"

namespace vtest {

using namespace vcred;

// One deterministic generator per process. Tests that need reproducible
// sub-sequences construct their own engines from fixed seeds instead.
inline std::mt19937_64& rng() {
    static std::mt19937_64 g(0x76637265642d3176ull);
    return g;
}

inline std::size_t randomIndex(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng());
}

inline std::string randomName(std::mt19937_64& g, int maxLen = 8) {
    static const char alphabet[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    std::uniform_int_distribution<int> len(1, maxLen);
    std::uniform_int_distribution<int> pick(0, sizeof(alphabet) - 2);
    std::string out;
    int n = len(g);
    for (int i = 0; i < n; ++i) out += alphabet[pick(g)];
    if (out == "eob") out += "x";  // never collide with the reserved token
    return out;
}

// EC key generation is cheap but not free; heavy property tests draw from a
// fixed pool and treat index collisions as harmless.
inline const KeyPair& pooledKey(std::size_t i) {
    static const std::vector<KeyPair> pool = [] {
        std::vector<KeyPair> v;
        v.reserve(32);
        for (int k = 0; k < 32; ++k) v.push_back(generateKeyPair());
        return v;
    }();
    return pool[i % pool.size()];
}

// Settable clock handle; copies share the same cell, so a Clock captured by a
// server keeps tracking later set()/advance() calls.
class TestClock {
public:
    explicit TestClock(std::int64_t start = 1'700'000'000) :
        t_(std::make_shared<std::int64_t>(start)) {}

    Clock clock() const {
        auto t = t_;
        return [t] { return *t; };
    }
    std::int64_t now() const { return *t_; }
    void set(std::int64_t t) { *t_ = t; }
    void advance(std::int64_t seconds) { *t_ += seconds; }

private:
    std::shared_ptr<std::int64_t> t_;
};

class TempDir {
public:
    explicit TempDir(const std::string& tag = "vcred-test") {
        auto base = std::filesystem::temp_directory_path();
        for (int attempt = 0;; ++attempt) {
            path_ = base / (tag + "-" + std::to_string(rng()() % 1000000000));
            std::error_code ec;
            if (std::filesystem::create_directory(path_, ec)) break;
            if (attempt > 100) throw std::runtime_error("cannot create a temp directory");
        }
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
    std::filesystem::path path_;
};

// A random honest chain: self-blessing plus depth-1 delegations, every link
// to a fresh pooled key. Returned with the keys so tests can re-sign or
// extend.
struct ChainFixture {
    std::vector<KeyPair> keys;  // keys[i] is bound by chain[i]
    Blessing blessing;
};

inline ChainFixture randomChain(std::mt19937_64& g, std::size_t depth,
                                std::int64_t expiryBase = 0) {
    ChainFixture fx;
    fx.keys.push_back(pooledKey(g()));
    fx.blessing = selfBlessing(fx.keys[0], randomName(g));
    for (std::size_t i = 1; i < depth; ++i) {
        fx.keys.push_back(pooledKey(g()));
        std::vector<Caveat> caveats;
        // Sprinkle caveats so mutation tests cover certificates that carry
        // them; expiries far in the future keep honest chains valid.
        if (g() % 3 == 0)
            caveats.push_back(expiryCaveat((expiryBase ? expiryBase : systemNow()) + 86400));
        fx.blessing = bless(fx.keys[i].pub, fx.keys[i - 1].sec, fx.blessing, randomName(g),
                            std::move(caveats));
    }
    return fx;
}

// Seed a principal the way `principal create` does: a universal self-blessing
// set as default, and its own root recognized.
inline Blessing seedSelf(Principal& p, const std::string& name) {
    Blessing self = p.blessSelf(name);
    std::size_t i = p.store().add(self, BlessingPattern::universal(), "self");
    p.store().setDefault(i);
    p.roots().add(root(self));
    p.save();
    return self;
}

}  // namespace vtest

#endif  // VCRED_TESTS_HELPERS_HPP
