#include "yolo4/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "yolo4/error.hpp"

namespace yolo4 {

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> tokens(std::string_view line) {
  if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
  std::vector<std::string> out;
  std::istringstream ss{std::string(line)};
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}

template <typename T>
T number(const std::string& tok, int line, const char* what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line, std::string("invalid ") + what + " '" + tok + "'");
  }
  return v;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(++line_no, line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
}

}  // namespace

std::vector<ManifestEntry> parse_manifest(std::string_view text,
                                          const std::filesystem::path& base_dir) {
  std::vector<ManifestEntry> out;
  for_each_line(text, [&](int line, std::string_view s) {
    const auto t = tokens(s);
    if (t.empty()) return;
    if (t.size() != 2) throw ParseError(line, "manifest lines need an image path and a label path");
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return path.is_absolute() ? path : base_dir / path;
    };
    out.push_back({resolve(t[0]), resolve(t[1])});
  });
  return out;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  try {
    return parse_manifest(read_text(path), path.parent_path());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

std::vector<LabeledBox> parse_labels(std::string_view text) {
  std::vector<LabeledBox> out;
  for_each_line(text, [&](int line, std::string_view s) {
    const auto t = tokens(s);
    if (t.empty()) return;
    if (t.size() != 5 && t.size() != 6) throw ParseError(line, "label lines need: class x1 y1 x2 y2");
    LabeledBox lb;
    lb.class_id = number<int>(t[0], line, "class id");
    lb.box = {number<double>(t[1], line, "x1"), number<double>(t[2], line, "y1"),
              number<double>(t[3], line, "x2"), number<double>(t[4], line, "y2")};
    if (t.size() == 6) lb.weight = number<double>(t[5], line, "weight");
    if (lb.class_id < 0) throw ParseError(line, "class id must be nonnegative");
    if (!lb.box.valid()) throw ParseError(line, "box corners out of order");
    out.push_back(lb);
  });
  return out;
}

std::vector<LabeledBox> load_labels(const std::filesystem::path& path) {
  try {
    return parse_labels(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

std::string format_labels(std::span<const LabeledBox> boxes) {
  std::string out;
  char buf[160];
  for (const LabeledBox& lb : boxes) {
    int n = std::snprintf(buf, sizeof buf, "%d %.2f %.2f %.2f %.2f", lb.class_id, lb.box.x1,
                          lb.box.y1, lb.box.x2, lb.box.y2);
    out.append(buf, static_cast<std::size_t>(n));
    if (lb.weight < 1.0) {
      n = std::snprintf(buf, sizeof buf, " %.6f", lb.weight);
      out.append(buf, static_cast<std::size_t>(n));
    }
    out += '\n';
  }
  return out;
}

DetectionRecord to_record(int image, const Detection& det) {
  auto px = [](double v) { return static_cast<int>(std::lround(v)); };
  return {image, det.class_id, det.score, px(det.bbox.x1), px(det.bbox.y1), px(det.bbox.x2),
          px(det.bbox.y2)};
}

std::string format_record(const DetectionRecord& r) {
  char buf[160];
  const int n = std::snprintf(buf, sizeof buf, "%d %d %.6f %d %d %d %d", r.image, r.class_id,
                              r.score, r.x1, r.y1, r.x2, r.y2);
  return std::string(buf, static_cast<std::size_t>(n));
}

DetectionRecord parse_record(std::string_view line) {
  const auto t = tokens(line);
  if (t.size() != 7) throw ParseError(0, "detection records have 7 fields");
  return {number<int>(t[0], 0, "image id"), number<int>(t[1], 0, "class id"),
          number<double>(t[2], 0, "score"),  number<int>(t[3], 0, "x1"),
          number<int>(t[4], 0, "y1"),        number<int>(t[5], 0, "x2"),
          number<int>(t[6], 0, "y2")};
}

void sort_records(std::vector<DetectionRecord>& records) {
  std::stable_sort(records.begin(), records.end(),
                   [](const DetectionRecord& a, const DetectionRecord& b) {
                     return std::tuple(a.image, -a.score, a.class_id, a.x1, a.y1, a.x2, a.y2) <
                            std::tuple(b.image, -b.score, b.class_id, b.x1, b.y1, b.x2, b.y2);
                   });
}

}  // namespace yolo4
