#include "gean/landmark_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "gean/error.hpp"

namespace gean {

void save_landmarks(const LandmarkSet& P, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "L=" << P.size() << " norm=[-1,1]\n";
  char buf[96];
  for (const Vec2& p : P) {
    std::snprintf(buf, sizeof buf, "%.12g %.12g\n", p.x, p.y);
    out << buf;
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

LandmarkSet load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw TruncatedDataError("landmark file '" + path.string() + "' is empty");
  long count = -1;
  char norm[32] = {0};
  if (std::sscanf(line.c_str(), "L=%ld norm=%31s", &count, norm) != 2 || count < 0 ||
      std::string(norm) != "[-1,1]") {
    throw FormatError("landmark file '" + path.string() + "': bad header '" + line + "'");
  }
  LandmarkSet P;
  P.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    if (!std::getline(in, line)) {
      throw TruncatedDataError("landmark file '" + path.string() + "': expected " + std::to_string(count) +
                               " points, found " + std::to_string(i));
    }
    std::istringstream ls(line);
    Vec2 p;
    std::string extra;
    if (!(ls >> p.x >> p.y) || (ls >> extra)) {
      throw FormatError("landmark file '" + path.string() + "': bad line " + std::to_string(i + 2));
    }
    P.push_back(p);
  }
  return P;
}

}  // namespace gean
