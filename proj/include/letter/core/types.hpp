#pragma once

#include <cstdint>

namespace letter {

// External ids in every input file are nonnegative integers. Catalogs are
// always iterated in ascending id order.
using ItemId = std::uint32_t;
using UserId = std::uint32_t;

}  // namespace letter
