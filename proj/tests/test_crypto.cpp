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

#include "helpers.hpp"

using namespace vcred;

TEST_CASE("sign and verify round-trip") {
    KeyPair kp = generateKeyPair();
    Digest d = sha256(toBytes("a message"));
    Signature sig = sign(kp.sec, d);
    CHECK(verify(kp.pub, d, sig));

    KeyPair other = generateKeyPair();
    CHECK_FALSE(verify(other.pub, d, sig));
}

TEST_CASE("verification fails for any flipped digest bit") {
    KeyPair kp = generateKeyPair();
    std::mt19937_64 g(42);
    for (int i = 0; i < 100; ++i) {
        Digest d = sha256(randomBytes(32));
        Signature sig = sign(kp.sec, d);
        Digest flipped = d;
        std::size_t byteIdx = g() % flipped.bytes.size();
        flipped.bytes[byteIdx] ^= static_cast<std::uint8_t>(1u << (g() % 8));
        CHECK_FALSE(verify(kp.pub, flipped, sig));
    }
}

TEST_CASE("malformed keys and signatures verify false, never throw") {
    KeyPair kp = generateKeyPair();
    Digest d = sha256(toBytes("m"));
    Signature sig = sign(kp.sec, d);

    PublicKey junkKey{toBytes("not a key")};
    CHECK_FALSE(verify(junkKey, d, sig));

    Signature junkSig{toBytes("not a signature")};
    CHECK_FALSE(verify(kp.pub, d, junkSig));

    Signature empty;
    CHECK_FALSE(verify(kp.pub, d, empty));
}

TEST_CASE("distinct key pairs, distinct keys") {
    KeyPair a = generateKeyPair();
    KeyPair b = generateKeyPair();
    CHECK_FALSE(a.pub == b.pub);
    CHECK(publicKeyOf(a.sec) == a.pub);
    CHECK(publicKeyOf(b.sec) == b.pub);
}

TEST_CASE("secret key files round-trip and reject other formats") {
    KeyPair kp = generateKeyPair();
    Bytes file = encodeSecretKeyFile(kp.sec);
    SecretKey back = decodeSecretKeyFile(file);
    CHECK(back.der == kp.sec.der);

    Bytes wrongScheme = file;
    wrongScheme[0] = 0x7e;
    CHECK_THROWS_AS(decodeSecretKeyFile(wrongScheme), EncodingError);

    Writer w;
    w.u8(kSchemeEcdsaP256);
    w.bytesField(toBytes("garbage"));
    CHECK_THROWS_AS(decodeSecretKeyFile(w.data()), CryptoError);
}

TEST_CASE("key agreement lands on the same shared secret") {
    KeyPair a = generateKeyPair();
    KeyPair b = generateKeyPair();
    Bytes ab = detail::ecdhSharedSecret(a.sec, b.pub);
    Bytes ba = detail::ecdhSharedSecret(b.sec, a.pub);
    CHECK(ab == ba);
    CHECK_FALSE(ab.empty());

    KeyPair c = generateKeyPair();
    CHECK(detail::ecdhSharedSecret(a.sec, c.pub) != ab);
}

TEST_CASE("public key text form round-trips") {
    KeyPair kp = generateKeyPair();
    PublicKey back = PublicKey::fromText(kp.pub.text());
    CHECK(back == kp.pub);
}
