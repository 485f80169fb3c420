#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgidm/image.hpp"
#include "vgidm/scene.hpp"

namespace vgidm {

// On-disk dataset layout:
//
//   manifest.jsonl     one frame per line:
//     {"frame_id", "camera": {"fx","fy","cx","cy","W","H"}, "position": [x,y,z],
//      "patches": [{"patch_id", "bbox": [u0,v0,u1,v1], "image": "relative/path.pgm",
//                   "loc3d": [x,y,z], "landmark_id"?, "true_loc3d"?, "margin"?,
//                   "checksum"?}]}
//     Optional frame keys: "coords" ("world" | "camera"), "rotation" (9 numbers,
//     row-major), "translation" (3 numbers).
//   pairs_train.csv / pairs_test.csv   header "patch_a,patch_b,label", label 1/0
//     (also accepts matched/unmatched).
//
// Images are binary PGM (P5) or PPM (P6). "checksum" is "fnv1a64:<16 hex digits>"
// over the raw file bytes.

class DatasetError : public std::runtime_error {
 public:
  explicit DatasetError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& ps) {
    std::string out = "dataset has " + std::to_string(ps.size()) + " problem(s):";
    for (const auto& p : ps) out += "\n  " + p;
    return out;
  }
  std::vector<std::string> problems_;
};

inline std::string fnv1a64_hex(const std::vector<char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

struct LoadOptions {
  int patch_size = 32;  ///< images are converted to grayscale and resized to this square size
};

namespace detail {

inline Vec3 vec3_of(const nlohmann::json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument(std::string(key) + " must have 3 entries");
  return {v[0], v[1], v[2]};
}

inline nlohmann::json json_of(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline std::vector<PairLabel> read_pairs_csv(const std::filesystem::path& path, std::vector<std::string>& problems) {
  std::vector<PairLabel> out;
  std::ifstream is(path);
  if (!is) {
    problems.push_back(path.string() + ": cannot open");
    return out;
  }
  std::string line;
  std::getline(is, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "patch_a,patch_b,label") {
    problems.push_back(path.string() + ": expected header 'patch_a,patch_b,label'");
    return out;
  }
  std::size_t row = 0;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, lab;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, lab, ',');
    try {
      PairLabel p{std::stoll(a), std::stoll(b), false};
      if (lab == "1" || lab == "matched") p.matched = true;
      else if (lab == "0" || lab == "unmatched") p.matched = false;
      else throw std::invalid_argument("label '" + lab + "'");
      out.push_back(p);
    } catch (const std::exception& e) {
      problems.push_back(path.string() + " row " + std::to_string(row) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace detail

inline void write_pairs_csv(const std::vector<PairLabel>& pairs, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DatasetError({"cannot write " + path.string()});
  os << "patch_a,patch_b,label\n";
  for (const auto& p : pairs) os << p.a << ',' << p.b << ',' << (p.matched ? 1 : 0) << '\n';
}

/// Writes manifest.jsonl, images/<patch_id>.pgm and the two pair files into `dir`.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw DatasetError({"cannot write " + (dir / "manifest.jsonl").string()});
  for (const auto& f : ds.frames) {
    const auto& k = f.camera.intrinsics;
    nlohmann::json jf;
    jf["frame_id"] = f.id;
    jf["camera"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"W", f.camera.width},
                    {"H", f.camera.height}};
    jf["position"] = detail::json_of(f.position);
    std::vector<double> rot;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot.push_back(f.camera.rotation(r, c));
    jf["rotation"] = rot;
    jf["translation"] = detail::json_of(f.camera.translation);
    nlohmann::json patches = nlohmann::json::array();
    bool world = true;
    for (const auto& p : f.patches) {
      const std::string rel = "images/" + std::to_string(p.id) + (p.pixels.channels == 3 ? ".ppm" : ".pgm");
      write_pnm(p.pixels, dir / rel);
      nlohmann::json jp;
      jp["patch_id"] = p.id;
      jp["bbox"] = {p.bbox.u0, p.bbox.v0, p.bbox.u1, p.bbox.v1};
      jp["image"] = rel;
      jp["checksum"] = "fnv1a64:" + fnv1a64_hex(read_bytes(dir / rel));
      if (p.loc3d) jp["loc3d"] = detail::json_of(*p.loc3d);
      if (p.landmark_id) jp["landmark_id"] = *p.landmark_id;
      if (p.true_loc3d) jp["true_loc3d"] = detail::json_of(*p.true_loc3d);
      if (p.margin != 0.0) jp["margin"] = p.margin;
      world = p.loc_is_world;
      patches.push_back(std::move(jp));
    }
    jf["coords"] = world ? "world" : "camera";
    jf["patches"] = std::move(patches);
    manifest << jf.dump() << '\n';
  }
  write_pairs_csv(ds.train.pairs, dir / "pairs_train.csv");
  write_pairs_csv(ds.test.pairs, dir / "pairs_test.csv");
}

/**
 * Loads a manifest and the pair files beside it (when present). All record
 * problems are collected and reported together, each tagged with its manifest
 * line (record index, 0-based).
 */
inline Dataset load_dataset(const std::filesystem::path& manifest_path, const LoadOptions& opt = {}) {
  namespace fs = std::filesystem;
  std::ifstream is(manifest_path);
  if (!is) throw DatasetError({"cannot open manifest " + manifest_path.string()});
  const fs::path root = manifest_path.parent_path();
  Dataset ds;
  std::vector<std::string> problems;
  std::string line;
  std::size_t record = 0;
  for (; std::getline(is, line); ++record) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "record " + std::to_string(record);
    try {
      const auto j = nlohmann::json::parse(line);
      Frame f;
      f.id = j.at("frame_id").get<std::int64_t>();
      const auto& jc = j.at("camera");
      f.camera.intrinsics = {jc.at("fx").get<double>(), jc.at("fy").get<double>(), jc.at("cx").get<double>(),
                             jc.at("cy").get<double>()};
      f.camera.width = jc.at("W").get<int>();
      f.camera.height = jc.at("H").get<int>();
      f.camera.validate();
      f.position = detail::vec3_of(j, "position");
      if (j.contains("rotation")) {
        const auto r = j.at("rotation").get<std::vector<double>>();
        if (r.size() != 9) throw std::invalid_argument("rotation must have 9 entries");
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) f.camera.rotation(a, b) = r[static_cast<std::size_t>(3 * a + b)];
        f.camera.translation = detail::vec3_of(j, "translation");
      } else {
        f.camera.translation = -f.position;
      }
      const bool world = j.value("coords", std::string("world")) != "camera";
      const auto& jps = j.at("patches");
      for (std::size_t k = 0; k < jps.size(); ++k) {
        const auto& jp = jps[k];
        const std::string pwhere = where + " patch " + std::to_string(k);
        try {
          Patch p;
          p.id = jp.at("patch_id").get<std::int64_t>();
          p.frame_id = f.id;
          const auto bb = jp.at("bbox").get<std::vector<double>>();
          if (bb.size() != 4) throw std::invalid_argument("bbox must have 4 entries");
          p.bbox = {bb[0], bb[1], bb[2], bb[3]};
          if (!p.bbox.valid()) throw std::invalid_argument("bbox requires u0<u1 and v0<v1");
          if (!p.bbox.inside(f.camera.width, f.camera.height)) throw std::invalid_argument("bbox outside image");
          if (jp.contains("loc3d")) p.loc3d = detail::vec3_of(jp, "loc3d");
          p.loc_is_world = world;
          if (jp.contains("landmark_id")) p.landmark_id = jp.at("landmark_id").get<std::int64_t>();
          if (jp.contains("true_loc3d")) p.true_loc3d = detail::vec3_of(jp, "true_loc3d");
          p.margin = jp.value("margin", 0.0);
          const fs::path img = root / jp.at("image").get<std::string>();
          if (!fs::exists(img)) throw std::invalid_argument("missing image file " + img.string());
          if (jp.contains("checksum")) {
            const auto want = jp.at("checksum").get<std::string>();
            const auto got = "fnv1a64:" + fnv1a64_hex(read_bytes(img));
            if (want != got) throw std::invalid_argument("checksum mismatch for " + img.string());
          }
          Image px = to_gray(read_pnm(img));
          if (px.width != opt.patch_size || px.height != opt.patch_size) {
            px = resize_bilinear(px, opt.patch_size, opt.patch_size);
          }
          p.pixels = std::move(px);
          f.patches.push_back(std::move(p));
        } catch (const std::exception& e) {
          problems.push_back(pwhere + ": " + e.what());
        }
      }
      ds.frames.push_back(std::move(f));
    } catch (const std::exception& e) {
      problems.push_back(where + ": " + e.what());
    }
  }
  for (auto [name, split] : {std::pair{"pairs_train.csv", &ds.train}, std::pair{"pairs_test.csv", &ds.test}}) {
    if (fs::exists(root / name)) split->pairs = detail::read_pairs_csv(root / name, problems);
  }
  ds.reindex();
  for (const auto* split : {&ds.train, &ds.test}) {
    for (std::size_t i = 0; i < split->pairs.size(); ++i) {
      const auto& p = split->pairs[i];
      if (!ds.has_patch(p.a) || !ds.has_patch(p.b)) {
        problems.push_back(std::string(split == &ds.train ? "pairs_train.csv" : "pairs_test.csv") + " row " +
                           std::to_string(i + 1) + ": unknown patch id");
      } else if (ds.frame_index_of_patch(p.a) == ds.frame_index_of_patch(p.b)) {
        problems.push_back(std::string(split == &ds.train ? "pairs_train.csv" : "pairs_test.csv") + " row " +
                           std::to_string(i + 1) + ": both patches come from the same frame");
      }
    }
  }
  if (!problems.empty()) throw DatasetError(std::move(problems));
  return ds;
}

}  // namespace vgidm
