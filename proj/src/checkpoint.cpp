#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gean/detector.hpp"
#include "gean/error.hpp"

namespace gean {

namespace {

constexpr const char* kMagic = "GEAN-CHECKPOINT";
constexpr int kVersion = 1;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string shape_string(const std::vector<int>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

void check_config_text(const std::string& s) {
  if (s.find_first_of("\n\r") != std::string::npos) {
    throw FormatError("checkpoint: config keys and values must be single-line");
  }
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

int parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("checkpoint: bad integer for " + what + ": '" + s + "'");
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const ToyDetector det = ckpt.detector();
  const auto& a = ckpt.architecture;
  std::ostringstream head;
  head << kMagic << ' ' << kVersion << '\n';
  head << "architecture landmarks=" << a.landmarks << " width=" << a.width << " height=" << a.height
       << " enc1=" << a.enc1_channels << " enc2=" << a.enc2_channels << '\n';
  for (const auto& [k, v] : ckpt.config) {
    check_config_text(k);
    check_config_text(v);
    if (k.empty() || k.find_first_of(" =\t") != std::string::npos) {
      throw FormatError("checkpoint: invalid config key '" + k + "'");
    }
    head << "config " << k << '=' << v << '\n';
  }
  for (std::size_t e = 0; e < ckpt.epoch_losses.size(); ++e) {
    head << "loss " << e + 1 << ' ' << format_double(ckpt.epoch_losses[e]) << '\n';
  }
  for (const TensorInfo& t : det.manifest()) head << "tensor " << t.name << ' ' << shape_string(t.shape) << '\n';
  head << "payload float32-le " << det.parameter_count() << '\n';

  std::vector<std::uint32_t> payload(det.parameter_count());
  for (std::size_t i = 0; i < payload.size(); ++i) {
    payload[i] = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(ckpt.parameters[i])));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string h = head.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(std::uint32_t)));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw TruncatedDataError("checkpoint: empty file");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    if (!(ls >> magic) || magic != kMagic) throw FormatError("checkpoint: bad magic in '" + path.string() + "'");
    if (!(ls >> version) || version != kVersion) {
      throw UnsupportedFormatError("checkpoint: unsupported format version");
    }
  }

  Checkpoint ckpt;
  bool have_arch = false;
  std::vector<std::pair<std::string, std::string>> tensors;
  std::size_t count = 0;
  bool have_payload = false;
  while (!have_payload) {
    if (!std::getline(in, line)) throw TruncatedDataError("checkpoint: header ends before payload");
    const std::size_t sp = line.find(' ');
    const std::string kind = line.substr(0, sp);
    const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (kind == "architecture") {
      std::istringstream ls(rest);
      std::string field;
      while (ls >> field) {
        const std::size_t eq = field.find('=');
        if (eq == std::string::npos) throw FormatError("checkpoint: bad architecture field '" + field + "'");
        const std::string key = field.substr(0, eq);
        const int v = parse_int(field.substr(eq + 1), key);
        if (key == "landmarks") ckpt.architecture.landmarks = v;
        else if (key == "width") ckpt.architecture.width = v;
        else if (key == "height") ckpt.architecture.height = v;
        else if (key == "enc1") ckpt.architecture.enc1_channels = v;
        else if (key == "enc2") ckpt.architecture.enc2_channels = v;
        else throw FormatError("checkpoint: unknown architecture field '" + key + "'");
      }
      have_arch = true;
    } else if (kind == "config") {
      const std::size_t eq = rest.find('=');
      if (eq == std::string::npos) throw FormatError("checkpoint: bad config line");
      ckpt.config[rest.substr(0, eq)] = rest.substr(eq + 1);
    } else if (kind == "loss") {
      std::istringstream ls(rest);
      std::size_t epoch = 0;
      std::string value;
      if (!(ls >> epoch >> value) || epoch != ckpt.epoch_losses.size() + 1) {
        throw FormatError("checkpoint: bad loss line");
      }
      ckpt.epoch_losses.push_back(std::strtod(value.c_str(), nullptr));
    } else if (kind == "tensor") {
      std::istringstream ls(rest);
      std::string name, shape;
      if (!(ls >> name >> shape)) throw FormatError("checkpoint: bad tensor line");
      tensors.emplace_back(name, shape);
    } else if (kind == "payload") {
      std::istringstream ls(rest);
      std::string encoding;
      if (!(ls >> encoding >> count) || encoding != "float32-le") {
        throw UnsupportedFormatError("checkpoint: unsupported payload encoding");
      }
      have_payload = true;
    } else {
      throw FormatError("checkpoint: unknown header line '" + kind + "'");
    }
  }
  if (!have_arch) throw FormatError("checkpoint: missing architecture line");

  // Validates the architecture and gives the expected manifest.
  const ToyDetector reference(ckpt.architecture, std::uint64_t{0});
  const auto& manifest = reference.manifest();
  if (tensors.size() != manifest.size() || count != reference.parameter_count()) {
    throw ShapeError("checkpoint: tensor manifest does not match the architecture");
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (tensors[i].first != manifest[i].name || tensors[i].second != shape_string(manifest[i].shape)) {
      throw ShapeError("checkpoint: tensor '" + tensors[i].first + "' does not match the architecture");
    }
  }

  std::vector<std::uint32_t> payload(count);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(count * sizeof(std::uint32_t)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(std::uint32_t)) {
    throw TruncatedDataError("checkpoint: payload shorter than declared");
  }
  ckpt.parameters.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    ckpt.parameters[i] = static_cast<double>(std::bit_cast<float>(to_le(payload[i])));
  }
  return ckpt;
}

}  // namespace gean
