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
// A principal on disk: a directory holding the secret key (`key`, 0600), the
// recognized roots (`roots`), and the blessing store (`blessings`). Mutation
// is single-writer — an exclusive flock on `lock` is held across
// load-modify-save — and all writes are atomic replaces, so readers never
// observe a torn file.

#ifndef VCRED_PRINCIPAL_HPP
#define VCRED_PRINCIPAL_HPP

#include <filesystem>
#include <string>
#include <utility>

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include "vcred/clock.hpp"
#include "vcred/store.hpp"

namespace vcred {

// Exclusive advisory lock on <dir>/lock for the lifetime of the object.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir) {
        std::filesystem::path p = dir / "lock";
        fd_ = ::open(p.c_str(), O_CREAT | O_RDWR, 0600);
        if (fd_ < 0) throw IoError("cannot open lock file " + p.string());
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw IoError("cannot lock " + p.string());
        }
    }
    ~DirLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    int fd_ = -1;
};

class Principal {
public:
    // Creates <dir> (0700) with a fresh key pair, an empty root set, and an
    // empty store. Refuses to overwrite an existing principal.
    static Principal create(const std::filesystem::path& dir) {
        std::filesystem::create_directories(dir);
        if (::chmod(dir.c_str(), 0700) != 0) throw IoError("chmod failed for " + dir.string());
        if (std::filesystem::exists(dir / "key"))
            throw IoError("principal already exists at " + dir.string());
        Principal p;
        p.dir_ = dir;
        p.keys_ = generateKeyPair();
        p.store_ = BlessingStore(p.keys_.pub);
        DirLock lock(dir);
        p.saveLocked();
        return p;
    }

    static Principal load(const std::filesystem::path& dir) {
        Principal p;
        p.dir_ = dir;
        DirLock lock(dir);  // waits out any in-flight mutation
        SecretKey sk = decodeSecretKeyFile(readFileBytes(dir / "key"));
        p.keys_ = KeyPair{publicKeyOf(sk), sk};
        p.roots_ = decodeRootSet(readFileBytes(dir / "roots"));
        p.store_ = BlessingStore::decode(readFileBytes(dir / "blessings"));
        if (!(p.store_.owner() == p.keys_.pub))
            throw IoError("store owner key does not match the principal key");
        return p;
    }

    const std::filesystem::path& dir() const { return dir_; }
    const KeyPair& keys() const { return keys_; }
    const PublicKey& publicKey() const { return keys_.pub; }
    const SecretKey& secretKey() const { return keys_.sec; }

    RootSet& roots() { return roots_; }
    const RootSet& roots() const { return roots_; }
    BlessingStore& store() { return store_; }
    const BlessingStore& store() const { return store_; }

    Blessing blessSelf(std::string_view name, std::vector<Caveat> caveats = {}) const {
        return selfBlessing(keys_, name, std::move(caveats));
    }

    // Persist roots and store under the directory lock. The key file is
    // written once at create time and never touched again.
    void save() const {
        DirLock lock(dir_);
        saveLocked();
    }

private:
    Principal() = default;

    void saveLocked() const {
        if (!std::filesystem::exists(dir_ / "key"))
            writeFileAtomic(dir_ / "key", encodeSecretKeyFile(keys_.sec), 0600);
        writeFileAtomic(dir_ / "roots", encodeRootSet(roots_), 0600);
        writeFileAtomic(dir_ / "blessings", store_.encode(), 0600);
    }

    std::filesystem::path dir_;
    KeyPair keys_;
    RootSet roots_;
    BlessingStore store_;
};

}  // namespace vcred

#endif  // VCRED_PRINCIPAL_HPP
