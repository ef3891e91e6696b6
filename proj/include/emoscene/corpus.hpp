#pragma once

// Enumerates <root>/<scene>/<stem>.{jpg,json} pairs.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <tuple>
#include <vector>

#include "emoscene/error.hpp"

namespace emoscene {

namespace fs = std::filesystem;

struct CorpusPair {
  std::string scene;
  std::string stem;
  fs::path image_path;
  fs::path json_path;

  bool operator==(const CorpusPair&) const = default;
};

struct OrphanReport {
  enum class Kind { missing_json, missing_image, io_error };
  std::string scene;
  std::string stem;
  fs::path path;
  Kind kind;
  std::string detail;

  bool operator==(const OrphanReport&) const = default;
};

inline std::string_view to_string(OrphanReport::Kind k) {
  switch (k) {
    case OrphanReport::Kind::missing_json: return "image without JSON";
    case OrphanReport::Kind::missing_image: return "JSON without image";
    case OrphanReport::Kind::io_error: return "unreadable entry";
  }
  return "";
}

struct CorpusScan {
  std::vector<CorpusPair> pairs;
  std::vector<OrphanReport> orphans;
};

inline bool is_image_extension(const fs::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

// Pairs files by stem within each scene directory. Output is sorted by
// (scene, stem) so it does not depend on directory enumeration order.
// Unreadable entries are reported as orphans of kind io_error; the scan
// continues past them.
inline CorpusScan scan_corpus(const fs::path& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorCode::IoError, root.string(), "corpus root is not a directory");

  struct Slot {
    std::vector<fs::path> images;
    std::optional<fs::path> json;
  };
  std::map<std::pair<std::string, std::string>, Slot> slots;
  CorpusScan out;

  std::vector<fs::path> scenes;
  for (fs::directory_iterator it(root, ec), end; !ec && it != end; it.increment(ec)) {
    std::error_code tec;
    if (it->is_directory(tec)) scenes.push_back(it->path());
  }
  if (ec) out.orphans.push_back({"", "", root, OrphanReport::Kind::io_error, ec.message()});
  std::sort(scenes.begin(), scenes.end());

  for (const auto& scene_dir : scenes) {
    const auto scene = scene_dir.filename().string();
    std::error_code sec;
    fs::directory_iterator it(scene_dir, sec);
    if (sec) {
      out.orphans.push_back({scene, "", scene_dir, OrphanReport::Kind::io_error, sec.message()});
      continue;
    }
    for (fs::directory_iterator end; it != end; it.increment(sec)) {
      std::error_code fec;
      if (!it->is_regular_file(fec)) continue;
      const auto& p = it->path();
      const auto key = std::pair{scene, p.stem().string()};
      if (p.extension() == ".json") {
        slots[key].json = p;
      } else if (is_image_extension(p)) {
        slots[key].images.push_back(p);
      }
    }
    if (sec) out.orphans.push_back({scene, "", scene_dir, OrphanReport::Kind::io_error, sec.message()});
  }

  for (auto& [key, slot] : slots) {
    std::sort(slot.images.begin(), slot.images.end());
    const auto& [scene, stem] = key;
    if (!slot.images.empty() && slot.json) {
      out.pairs.push_back({scene, stem, slot.images.front(), *slot.json});
    } else if (!slot.images.empty()) {
      out.orphans.push_back({scene, stem, slot.images.front(), OrphanReport::Kind::missing_json, ""});
    } else if (slot.json) {
      out.orphans.push_back({scene, stem, *slot.json, OrphanReport::Kind::missing_image, ""});
    }
  }
  std::stable_sort(out.orphans.begin(), out.orphans.end(), [](const auto& a, const auto& b) {
    return std::tie(a.scene, a.stem) < std::tie(b.scene, b.stem);
  });
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, path.string(), "read failed");
  return ss.str();
}

// Writes through a temporary file and renames it into place.
inline void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, tmp.string(), "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, tmp.string(), "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, path.string(), ec.message());
}

}  // namespace emoscene
