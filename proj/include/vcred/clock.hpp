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

#ifndef VCRED_CLOCK_HPP
#define VCRED_CLOCK_HPP

#include <chrono>
#include <cstdint>
#include <functional>

namespace vcred {

// Wall-clock source in unix seconds. Everything time-dependent takes one of
// these so tests (and the CLI's --at flag) can pin the clock.
using Clock = std::function<std::int64_t()>;

inline std::int64_t systemNow() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

inline Clock systemClock() {
    return [] { return systemNow(); };
}

}  // namespace vcred

#endif  // VCRED_CLOCK_HPP
