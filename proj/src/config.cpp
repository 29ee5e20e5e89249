#include "gean/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <vector>

#include "gean/error.hpp"

namespace gean {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kAdv: return "adv";
    case Variant::kGadv: return "Gadv";
    case Variant::kGK: return "GK";
  }
  return "?";
}

std::string to_string(Normalization n) { return n == Normalization::kInterocular ? "interocular" : "facesize"; }

Variant parse_variant(std::string_view s) {
  if (s == "adv") return Variant::kAdv;
  if (s == "Gadv") return Variant::kGadv;
  if (s == "GK") return Variant::kGK;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected adv, Gadv or GK)");
}

Normalization parse_normalization(std::string_view s) {
  if (s == "interocular") return Normalization::kInterocular;
  if (s == "facesize") return Normalization::kFaceSize;
  throw ConfigError("unknown normalization '" + std::string(s) + "' (expected interocular or facesize)");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  // std::from_chars for double is unavailable in libstdc++ 11.
  const std::string s(value);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + s + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true or false");
}

struct Field {
  const char* key;
  std::function<void(PipelineConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define GEAN_INT_FIELD(name, member)                                                                       \
  Field {                                                                                                  \
    name, [](PipelineConfig& c, std::string_view k, std::string_view v) { c.member = parse_number<int>(k, v); }, \
        [](const PipelineConfig& c) { return std::to_string(c.member); }                                 \
  }
#define GEAN_DOUBLE_FIELD(name, member)                                                                     \
  Field {                                                                                                   \
    name, [](PipelineConfig& c, std::string_view k, std::string_view v) { c.member = parse_double(k, v); }, \
        [](const PipelineConfig& c) { return fmt(c.member); }                                             \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"variant", [](PipelineConfig& c, std::string_view, std::string_view v) { c.variant = parse_variant(v); },
       [](const PipelineConfig& c) { return to_string(c.variant); }},
      GEAN_INT_FIELD("k_train", k_train),
      GEAN_INT_FIELD("k_test", k_test),
      {"aggregate", [](PipelineConfig& c, std::string_view k, std::string_view v) { c.aggregate = parse_bool(k, v); },
       [](const PipelineConfig& c) { return std::string(c.aggregate ? "true" : "false"); }},
      {"weighting",
       [](PipelineConfig& c, std::string_view, std::string_view v) {
         if (v == "displacement") c.weighting = ScoreWeighting::kDisplacement;
         else if (v == "inverse") c.weighting = ScoreWeighting::kInverseDisplacement;
         else throw ConfigError("weighting must be displacement or inverse");
       },
       [](const PipelineConfig& c) {
         return std::string(c.weighting == ScoreWeighting::kDisplacement ? "displacement" : "inverse");
       }},
      {"scheme", [](PipelineConfig& c, std::string_view, std::string_view v) { c.scheme = std::string(v); },
       [](const PipelineConfig& c) { return c.scheme; }},
      GEAN_DOUBLE_FIELD("tau", attack.tau),
      GEAN_DOUBLE_FIELD("step", attack.step),
      GEAN_INT_FIELD("max_iters", attack.max_iters),
      GEAN_DOUBLE_FIELD("ridge", attack.ridge),
      GEAN_DOUBLE_FIELD("delta_fraction", delta_fraction),
      GEAN_DOUBLE_FIELD("gk_scale_min", known.scale_min),
      GEAN_DOUBLE_FIELD("gk_scale_max", known.scale_max),
      GEAN_DOUBLE_FIELD("gk_translation_fraction", known.translation_fraction),
      GEAN_INT_FIELD("gk_max_attempts", known.max_attempts),
      GEAN_DOUBLE_FIELD("sigma_eta", sigma_eta),
      GEAN_INT_FIELD("epochs", epochs),
      GEAN_INT_FIELD("batch_size", batch_size),
      {"optimizer",
       [](PipelineConfig& c, std::string_view, std::string_view v) {
         if (v == "sgd") c.optimizer = OptimizerKind::kSgd;
         else if (v == "adam") c.optimizer = OptimizerKind::kAdam;
         else throw ConfigError("optimizer must be sgd or adam");
       },
       [](const PipelineConfig& c) { return std::string(c.optimizer == OptimizerKind::kSgd ? "sgd" : "adam"); }},
      GEAN_DOUBLE_FIELD("learning_rate", learning_rate),
      GEAN_DOUBLE_FIELD("weight_decay", weight_decay),
      GEAN_DOUBLE_FIELD("momentum", momentum),
      GEAN_INT_FIELD("warm_start_epochs", warm_start_epochs),
      GEAN_DOUBLE_FIELD("warm_start_learning_rate", warm_start_learning_rate),
      GEAN_DOUBLE_FIELD("heatmap_sigma", heatmap_sigma),
      GEAN_INT_FIELD("image_size",
                     detector.width),  // height follows width; see set_config_value
      GEAN_INT_FIELD("enc1_channels", detector.enc1_channels),
      GEAN_INT_FIELD("enc2_channels", detector.enc2_channels),
      {"normalization",
       [](PipelineConfig& c, std::string_view, std::string_view v) { c.normalization = parse_normalization(v); },
       [](const PipelineConfig& c) { return to_string(c.normalization); }},
      {"seed",
       [](PipelineConfig& c, std::string_view k, std::string_view v) { c.seed = parse_number<std::uint64_t>(k, v); },
       [](const PipelineConfig& c) { return std::to_string(c.seed); }},
  };
  return table;
}

#undef GEAN_INT_FIELD
#undef GEAN_DOUBLE_FIELD

}  // namespace

void PipelineConfig::validate() const {
  if (k_train < 1 || k_test < 1) throw ConfigError("k_train and k_test must be >= 1");
  if (!(delta_fraction > 0.0)) throw ConfigError("delta_fraction must be > 0");
  if (!(sigma_eta >= 0.0)) throw ConfigError("sigma_eta must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (warm_start_epochs < 0) throw ConfigError("warm_start_epochs must be >= 0");
  if (!(warm_start_learning_rate > 0.0)) throw ConfigError("warm_start_learning_rate must be > 0");
  if (!(heatmap_sigma > 0.0)) throw ConfigError("heatmap_sigma must be > 0");
  if (detector.width != detector.height) throw ConfigError("image_size: only square inputs are supported");
  if (detector.width < 8 || detector.width % 8 != 0) throw ConfigError("image_size must be a multiple of 8");
  if (detector.enc1_channels < 1 || detector.enc2_channels < 1) throw ConfigError("channel counts must be >= 1");
  if (static_cast<int>(scheme_landmark_count(scheme)) != detector.landmarks) {
    throw ConfigError("scheme '" + scheme + "' does not match the detector landmark count");
  }
  AttackConfig a = attack;
  a.branches = std::max(k_train, k_test);
  a.clip = delta_fraction;
  a.validate();
  if (!(known.scale_min > 0.0) || known.scale_max < known.scale_min || known.translation_fraction < 0.0 ||
      known.max_attempts < 1) {
    throw ConfigError("invalid known-transform ranges");
  }
}

void set_config_value(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  const std::string v = trim(value);
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(cfg, key, v);
      if (key == "image_size") cfg.detector.height = cfg.detector.width;
      if (key == "scheme") cfg.detector.landmarks = static_cast<int>(scheme_landmark_count(cfg.scheme));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::map<std::string, std::string> config_to_map(const PipelineConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const Field& f : fields()) out[f.key] = f.get(cfg);
  return out;
}

void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    set_config_value(cfg, trim(std::string_view(t).substr(0, eq)), std::string_view(t).substr(eq + 1));
  }
}

}  // namespace gean
