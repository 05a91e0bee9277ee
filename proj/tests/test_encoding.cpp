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

#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>

#include "helpers.hpp"

using namespace vcred;
using vtest::rng;

namespace {

std::string hex(ByteView b) { return hexEncode(b); }

}  // namespace

TEST_CASE("writer emits big-endian length-prefixed fields") {
    Writer w;
    w.stringField("TV");
    CHECK(hex(w.data()) == "000000025456");

    Writer e;
    e.count(0);  // an empty list is just its count
    CHECK(hex(e.data()) == "00000000");

    Writer n;
    n.u32(0x01020304u);
    CHECK(hex(n.data()) == "01020304");

    Writer i;
    i.i64(-2);
    CHECK(hex(i.data()) == "fffffffffffffffe");
}

TEST_CASE("reader round-trips every primitive") {
    Writer w;
    w.u8(0xab);
    w.u32(123456789);
    w.i64(-9'000'000'000LL);
    w.bytesField(toBytes("payload"));
    w.stringField("text");
    w.count(3);
    Bytes buf = w.take();

    Reader r(buf);
    CHECK(r.u8() == 0xab);
    CHECK(r.u32() == 123456789);
    CHECK(r.i64() == -9'000'000'000LL);
    CHECK(r.bytesField() == toBytes("payload"));
    CHECK(r.stringField() == "text");
    CHECK(r.count() == 3);
    CHECK(r.done());
    CHECK_NOTHROW(r.expectEnd());
}

TEST_CASE("reader fails closed on truncation and trailing bytes") {
    Bytes b = {0x00, 0x00, 0x00, 0x05, 'a', 'b'};  // claims 5, has 2
    Reader r(b);
    CHECK_THROWS_AS(r.bytesField(), EncodingError);

    Bytes ok = {0x01, 0x02};
    Reader r2(ok);
    (void)r2.u8();
    CHECK_THROWS_AS(r2.expectEnd(), EncodingError);

    Bytes empty;
    Reader r3(empty);
    CHECK_THROWS_AS(r3.u8(), EncodingError);
}

TEST_CASE("a reader may own its buffer") {
    // Constructed from a temporary, the reader must keep the bytes alive for
    // its whole lifetime.
    Writer w;
    w.stringField("inner");
    Writer outer;
    outer.bytesField(w.data());
    Bytes buf = outer.take();

    Reader r(buf);
    Reader owning(r.bytesField());
    CHECK(owning.stringField() == "inner");
    CHECK(owning.done());
}

TEST_CASE("base64url round-trips and rejects junk") {
    for (int i = 0; i < 200; ++i) {
        Bytes b = randomBytes(static_cast<std::size_t>(rng()() % 67));
        CHECK(base64urlDecode(base64urlEncode(b)) == b);
    }
    // Unpadded URL-safe alphabet: no '+', '/', or '='.
    Bytes all;
    for (int i = 0; i < 256; ++i) all.push_back(static_cast<std::uint8_t>(i));
    std::string enc = base64urlEncode(all);
    CHECK(enc.find('+') == std::string::npos);
    CHECK(enc.find('/') == std::string::npos);
    CHECK(enc.find('=') == std::string::npos);
    CHECK_THROWS_AS(base64urlDecode("not!valid"), Error);
}

TEST_CASE("hash arguments cannot be confused across boundaries") {
    CHECK(hashArgs(std::string("ab"), std::string("c")) !=
          hashArgs(std::string("a"), std::string("bc")));
    CHECK(hashArgs(std::string("x")) == hashArgs(std::string("x")));
    // A value against the pair of its halves.
    CHECK(hashArgs(std::string("xy")) != hashArgs(std::string("x"), std::string("y")));
}

TEST_CASE("canonical encodings are distinct over a generated corpus") {
    // Injectivity at desk scale: distinct values, distinct encodings.
    std::mt19937_64 g(7);
    std::set<std::string> seen;
    std::set<std::string> sources;
    int kept = 0;
    for (int i = 0; i < 10'000; ++i) {
        Certificate c;
        c.name = vtest::randomName(g);
        c.publicKey = vtest::pooledKey(g()).pub;
        if (g() % 4 == 0) c.caveats.push_back(expiryCaveat(static_cast<std::int64_t>(g() % 1'000'000)));
        c.signature.der = randomBytes(8 + g() % 8);
        Writer w;
        encodeValue(w, c);
        std::string enc = hex(w.data());
        std::string src = c.name + "|" + hex(c.publicKey.der) + "|" + std::to_string(c.caveats.size()) +
                          "|" + hex(c.signature.der) +
                          (c.caveats.empty() ? "" : "|" + hex(c.caveats[0].payload));
        if (!sources.insert(src).second) continue;  // true duplicate draw
        ++kept;
        CHECK(seen.insert(enc).second);
    }
    CHECK(kept > 9'000);  // the draw space is large enough that this holds
}

TEST_CASE("certificate chain digests shift when any name changes") {
    std::mt19937_64 g(11);
    for (int i = 0; i < 50; ++i) {
        vtest::ChainFixture fx = vtest::randomChain(g, 3);
        auto chain = fx.blessing.chain;
        Digest base = hashArgs(std::span<const Certificate>(chain));
        for (std::size_t k = 0; k < chain.size(); ++k) {
            auto mutated = chain;
            mutated[k].name += "x";
            CHECK(hashArgs(std::span<const Certificate>(mutated)) != base);
        }
    }
}
