#pragma once

#include <filesystem>

#include "gean/imaging.hpp"

namespace gean {

/// Text format: header "L=<count> norm=[-1,1]", then one "x y" line per
/// landmark with 12 significant digits.
void save_landmarks(const LandmarkSet& P, const std::filesystem::path& path);

/// Throws IoError, FormatError (bad header or line) or TruncatedDataError
/// (fewer lines than the header announces).
LandmarkSet load_landmarks(const std::filesystem::path& path);

}  // namespace gean
