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

// Convenience header pulling in the whole library.

#ifndef VCRED_VCRED_HPP
#define VCRED_VCRED_HPP

#include "vcred/audit.hpp"      // IWYU pragma: export
#include "vcred/blessing.hpp"   // IWYU pragma: export
#include "vcred/caveats.hpp"    // IWYU pragma: export
#include "vcred/channel.hpp"    // IWYU pragma: export
#include "vcred/clock.hpp"      // IWYU pragma: export
#include "vcred/crypto.hpp"     // IWYU pragma: export
#include "vcred/encoding.hpp"   // IWYU pragma: export
#include "vcred/groups.hpp"     // IWYU pragma: export
#include "vcred/lock.hpp"       // IWYU pragma: export
#include "vcred/net.hpp"        // IWYU pragma: export
#include "vcred/pattern.hpp"    // IWYU pragma: export
#include "vcred/principal.hpp"  // IWYU pragma: export
#include "vcred/services.hpp"   // IWYU pragma: export
#include "vcred/store.hpp"      // IWYU pragma: export
#include "vcred/wire.hpp"       // IWYU pragma: export

#endif  // VCRED_VCRED_HPP
