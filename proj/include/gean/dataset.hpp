#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gean/groups.hpp"
#include "gean/imaging.hpp"

namespace gean {

struct Sample {
  std::string name;
  Image image;
  LandmarkSet landmarks;  // ground truth P*
  double face_size = 0.0;   // sqrt(w * h) of the landmark bounding box
  double interocular = 0.0; // distance between the outer eye corners
};

/// Per-landmark-set normalizers.
double face_size(const LandmarkSet& P);
double interocular_distance(const LandmarkSet& P, const SemanticGroups& groups);
/// Width of the landmark bounding box.
double bbox_width(const LandmarkSet& P);

/// Procedurally rendered faces (elliptic head outline, almond eyes, brow
/// arcs, nose wedge, mouth arc) with 19 landmarks in the `synthetic` layout.
/// Deterministic in (n, seed, size).
std::vector<Sample> synth_dataset(int n, std::uint64_t seed, int size = 64);

/// Writes <name>.pgm and <name>.pts per sample.
void save_dataset(const std::vector<Sample>& data, const std::filesystem::path& dir);
/// Loads every <name>.pgm with a matching <name>.pts, sorted by name.
/// Normalizers are recomputed from the landmarks under `scheme`.
std::vector<Sample> load_dataset(const std::filesystem::path& dir, const std::string& scheme);

}  // namespace gean
