#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "yolo4/box.hpp"

namespace yolo4 {

/// One manifest line: "<image path> <label path>", relative paths resolved
/// against the manifest's directory. Blank lines and '#' comments are skipped.
struct ManifestEntry {
  std::filesystem::path image;
  std::filesystem::path labels;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

std::vector<ManifestEntry> parse_manifest(std::string_view text,
                                          const std::filesystem::path& base_dir);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

/// Label lines: "<class id> <x1> <y1> <x2> <y2>" in source pixels.
std::vector<LabeledBox> parse_labels(std::string_view text);
std::vector<LabeledBox> load_labels(const std::filesystem::path& path);

/// Coordinates with two decimals; a fifth column carries weights below 1.
std::string format_labels(std::span<const LabeledBox> boxes);

/// "<image id> <class id> <score, 6 decimals> <x1> <y1> <x2> <y2>"
struct DetectionRecord {
  int image = 0;
  int class_id = 0;
  double score = 0;
  int x1 = 0;
  int y1 = 0;
  int x2 = 0;
  int y2 = 0;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

DetectionRecord to_record(int image, const Detection& det);
std::string format_record(const DetectionRecord& r);
DetectionRecord parse_record(std::string_view line);

/// Sorts by image id, then score descending, then class and coordinates.
void sort_records(std::vector<DetectionRecord>& records);

}  // namespace yolo4
