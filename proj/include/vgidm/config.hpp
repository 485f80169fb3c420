#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vgidm/apps.hpp"
#include "vgidm/dataset_io.hpp"
#include "vgidm/matcher.hpp"
#include "vgidm/synth.hpp"
#include "vgidm/train.hpp"

namespace vgidm {

inline constexpr const char* kCodeVersion = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& ps) {
    std::string out = "invalid configuration:";
    for (const auto& p : ps) out += "\n  " + p;
    return out;
  }
  std::vector<std::string> problems_;
};

inline GnnArch gnn_arch_from_string(const std::string& s) {
  if (s == "gcn") return GnnArch::gcn;
  if (s == "gat") return GnnArch::gat;
  if (s == "sage") return GnnArch::sage;
  throw std::invalid_argument("expected gcn, gat or sage");
}

inline const char* to_string(GnnArch a) {
  switch (a) {
    case GnnArch::gcn: return "gcn";
    case GnnArch::gat: return "gat";
    case GnnArch::sage: return "sage";
  }
  return "?";
}

inline FeaturizerKind featurizer_from_string(const std::string& s) {
  if (s == "fixed_hist") return FeaturizerKind::fixed_hist;
  if (s == "tiny_conv") return FeaturizerKind::tiny_conv;
  throw std::invalid_argument("expected fixed_hist or tiny_conv");
}

inline const char* to_string(FeaturizerKind k) { return k == FeaturizerKind::fixed_hist ? "fixed_hist" : "tiny_conv"; }

/// Everything a CLI run needs. Defaults match the desk-scale benchmark.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "out";

  std::string manifest;        ///< dataset manifest; empty means generate
  std::string cross_manifest;  ///< second dataset for train-on-A, test-on-B evaluation
  int patch_size = 32;

  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;

  SinkhornConfig sinkhorn;
  double frame_threshold = 0.5;  ///< used when no validation split is available
  bool tune_dustbin = false;     ///< pick the dustbin score from a grid on the validation split
  RouteConfig route;

  StereoConfig stereo;
  double stereo_threshold = kStereoThreshold;

  RunConfig() {
    model.k = 4;
    model.arch = GnnArch::sage;
    train.epochs = 50;
    train.lr = 3e-3;
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true or false");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <class T>
Field number_field(T& ref, double lo, double hi) {
  return {[&ref, lo, hi](const std::string& s) {
            const T v = parse_number<T>(s);
            if (!(static_cast<double>(v) >= lo && static_cast<double>(v) <= hi)) {
              std::ostringstream os;
              os << "out of range [" << lo << ", " << hi << "]";
              throw std::invalid_argument(os.str());
            }
            ref = v;
          },
          [&ref] {
            std::ostringstream os;
            os.precision(17);
            os << ref;
            return os.str();
          }};
}

inline Field string_field(std::string& ref) {
  return {[&ref](const std::string& s) { ref = s; }, [&ref] { return ref; }};
}

inline Field bool_field(bool& ref) {
  return {[&ref](const std::string& s) { ref = parse_bool(s); }, [&ref] { return std::string(ref ? "true" : "false"); }};
}

template <class E, class Parse>
Field enum_field(E& ref, Parse parse) {
  return {[&ref, parse](const std::string& s) { ref = parse(s); }, [&ref] { return std::string(to_string(ref)); }};
}

inline std::map<std::string, Field> fields_of(RunConfig& c) {
  constexpr double big = 1e12;
  std::map<std::string, Field> f;
  f["seed"] = number_field(c.seed, 0, 1.8e19);
  f["out"] = string_field(c.out);
  f["data.manifest"] = string_field(c.manifest);
  f["data.cross_manifest"] = string_field(c.cross_manifest);
  f["data.patch_size"] = number_field(c.patch_size, 4, 512);
  f["synth.scenes"] = number_field(c.synth.scenes, 1, 100000);
  f["synth.depth_noise"] = number_field(c.synth.render.depth_noise, 0, 100);
  f["synth.occlusion"] = number_field(c.synth.render.occlusion, 0, 1);
  f["synth.pixel_noise"] = number_field(c.synth.render.pixel_noise, 0, 255);
  f["synth.prototypes"] = number_field(c.synth.scene.prototypes_per_class, 0, 1000);
  f["synth.margin"] = number_field(c.synth.render.margin, 0, 1000);
  f["synth.min_gap"] = number_field(c.synth.min_gap, 0, 1000);
  f["synth.max_gap"] = number_field(c.synth.max_gap, 0, 1000);
  f["synth.test_fraction"] = number_field(c.synth.test_fraction, 0, 1);
  f["synth.tau_match"] = number_field(c.synth.ground_truth.tau_match, 0, big);
  f["model.n"] = number_field(c.model.n, 1, 4096);
  f["model.k"] = number_field(c.model.k, 0, 1000);
  f["gnn.heads"] = number_field(c.model.heads, 1, 64);
  f["gnn.arch"] = enum_field(c.model.arch, gnn_arch_from_string);
  f["model.featurizer"] = enum_field(c.model.featurizer, featurizer_from_string);
  f["model.pair"] = enum_field(c.model.variant.pair, feature_pair_from_string);
  f["model.disc"] = enum_field(c.model.variant.disc, discriminator_from_string);
  f["model.gamma"] = number_field(c.model.gamma, 0, 1);
  f["train.epochs"] = number_field(c.train.epochs, 0, 1000000);
  f["train.lr"] = number_field(c.train.lr, 0, 10);
  f["train.batch_frames"] = number_field(c.train.batch_frames, 1, 100000);
  f["train.balance"] = bool_field(c.train.balance);
  f["place.dustbin"] = number_field(c.sinkhorn.dustbin, -big, big);
  f["place.tune_dustbin"] = bool_field(c.tune_dustbin);
  f["place.temperature"] = number_field(c.sinkhorn.temperature, 1e-9, big);
  f["place.iterations"] = number_field(c.sinkhorn.iterations, 1, 100000);
  f["place.frame_threshold"] = number_field(c.frame_threshold, 0, 1);
  f["place.length"] = number_field(c.route.length, 1, 1e6);
  f["place.landmarks"] = number_field(c.route.landmarks, 4, 100000);
  f["stereo.scenes"] = number_field(c.stereo.scenes, 1, 100000);
  f["stereo.baseline"] = number_field(c.stereo.baseline, 1e-6, 100);
  f["stereo.threshold"] = number_field(c.stereo_threshold, 0, 1);
  return f;
}

}  // namespace detail

/// Applies one key=value assignment, throwing std::invalid_argument on a bad key or value.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  auto fields = detail::fields_of(c);
  auto it = fields.find(key);
  if (it == fields.end()) throw std::invalid_argument("unknown key");
  it->second.set(value);
}

/**
 * Flat key=value text. '#' starts a comment; a "[section]" line prefixes the
 * following keys with "section.". Every bad line is reported together.
 */
inline RunConfig parse_config(const std::string& text, RunConfig base = {}) {
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    std::string key = detail::trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    try {
      set_config_value(base, key, detail::trim(line.substr(eq + 1)));
    } catch (const std::exception& e) {
      problems.push_back("line " + std::to_string(lineno) + ": " + key + ": " + e.what());
    }
  }
  if (base.model.arch == GnnArch::gat && base.model.heads && base.model.n % base.model.heads != 0) {
    problems.push_back("model.n: " + std::to_string(base.model.n) + " is not divisible by gnn.heads");
  }
  if (base.synth.min_gap > base.synth.max_gap) problems.push_back("synth.min_gap: exceeds synth.max_gap");
  for (const auto* p : {&base.manifest, &base.cross_manifest}) {
    if (!p->empty() && !std::filesystem::exists(*p)) problems.push_back("data: path does not exist: " + *p);
  }
  if (!problems.empty()) throw ConfigError(problems);
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

/// Canonical sorted key=value dump.
inline std::string dump_config(const RunConfig& c) {
  RunConfig copy = c;
  std::string out;
  for (const auto& [k, f] : detail::fields_of(copy)) out += k + " = " + f.get() + "\n";
  return out;
}

/// Hash of every setting except the output directory.
inline std::string config_hash(const RunConfig& c) {
  RunConfig keyed = c;
  keyed.out = RunConfig{}.out;
  const std::string s = dump_config(keyed);
  return fnv1a64_hex(std::vector<char>(s.begin(), s.end()));
}

/// Model settings written next to a checkpoint.
inline nlohmann::json model_config_json(const ModelConfig& m) {
  return {{"n", m.n},
          {"k", m.k},
          {"featurizer", to_string(m.featurizer)},
          {"conv_width", m.conv_width},
          {"arch", to_string(m.arch)},
          {"heads", m.heads},
          {"pooling", m.pooling == Pooling::mean ? "mean" : "max"},
          {"pair", to_string(m.variant.pair)},
          {"disc", to_string(m.variant.disc)},
          {"gamma", m.gamma},
          {"clamp_eps", m.clamp_eps}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.n = j.at("n").get<std::size_t>();
  m.k = j.at("k").get<std::size_t>();
  m.featurizer = featurizer_from_string(j.at("featurizer").get<std::string>());
  m.conv_width = j.value("conv_width", m.conv_width);
  m.arch = gnn_arch_from_string(j.at("arch").get<std::string>());
  m.heads = j.at("heads").get<std::size_t>();
  m.pooling = j.value("pooling", std::string("mean")) == "max" ? Pooling::max : Pooling::mean;
  m.variant.pair = feature_pair_from_string(j.at("pair").get<std::string>());
  m.variant.disc = discriminator_from_string(j.at("disc").get<std::string>());
  m.gamma = j.at("gamma").get<double>();
  m.clamp_eps = j.value("clamp_eps", m.clamp_eps);
  return m;
}

}  // namespace vgidm
