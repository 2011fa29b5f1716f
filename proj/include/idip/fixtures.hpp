#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "idip/image_io.hpp"

namespace idip {

enum class FixtureKind { Gradient, Texture, Checker };

FixtureKind parse_fixture_kind(std::string_view name);
std::string_view fixture_kind_name(FixtureKind kind);

/// Synthetic ground truth plus a rectangular-blotch damage mask with exactly
/// round(damage_fraction * size^2) damaged pixels. Damaged pixels of the
/// corrupted image are white. Deterministic in (kind, size, fraction, seed).
TripletData make_fixture(FixtureKind kind, std::size_t size, double damage_fraction,
                         std::uint64_t seed);

}  // namespace idip
