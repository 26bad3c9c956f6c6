#include "siamnet/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "siamnet/errors.hpp"
#include "siamnet/parallel.hpp"
#include "siamnet/rng.hpp"

namespace siamnet::data {

// ---- images ---------------------------------------------------------------

Tensor resize_bilinear(const Tensor& chw, std::size_t height, std::size_t width) {
  require_rank("resize_bilinear", chw, 3);
  const std::size_t c = chw.dim(0), ih = chw.dim(1), iw = chw.dim(2);
  if (ih == 0 || iw == 0 || height == 0 || width == 0) {
    throw DimensionError("resize_bilinear: empty image or target");
  }
  if (ih == height && iw == width) return chw;
  const double sy = static_cast<double>(ih) / static_cast<double>(height);
  const double sx = static_cast<double>(iw) / static_cast<double>(width);

  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  auto taps = [](std::size_t out, std::size_t in, double scale) {
    std::vector<Tap> t(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  const auto ty = taps(height, ih, sy);
  const auto tx = taps(width, iw, sx);

  Tensor out({c, height, width});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < height; ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < width; ++x) {
        const Tap& b = tx[x];
        const double top = chw.at(ch, a.i0, b.i0) * (1.0 - b.frac) + chw.at(ch, a.i0, b.i1) * b.frac;
        const double bot = chw.at(ch, a.i1, b.i0) * (1.0 - b.frac) + chw.at(ch, a.i1, b.i1) * b.frac;
        out.at(ch, y, x) = top * (1.0 - a.frac) + bot * a.frac;
      }
    }
  }
  return out;
}

Tensor normalize_pixels(const Tensor& raw) {
  Tensor out(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] / 255.0 - 0.5) * 2.0;
  return out;
}

PersonImage preprocess(PersonImage image, const Geometry& geometry) {
  require_rank("preprocess", image.pixels, 3);
  const bool sized = image.pixels.dim(1) == geometry.height && image.pixels.dim(2) == geometry.width;
  if (image.normalized && sized) return image;
  if (image.normalized) {
    image.pixels = resize_bilinear(image.pixels, geometry.height, geometry.width);
    return image;
  }
  image.pixels = normalize_pixels(resize_bilinear(image.pixels, geometry.height, geometry.width));
  image.normalized = true;
  return image;
}

// ---- manifest ---------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool is_number(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

// Numeric ids compare numerically, everything else lexicographically.
bool subject_less(const std::string& a, const std::string& b) {
  if (is_number(a) && is_number(b)) {
    const auto ta = a.find_first_not_of('0'), tb = b.find_first_not_of('0');
    const std::string na = ta == std::string::npos ? "0" : a.substr(ta);
    const std::string nb = tb == std::string::npos ? "0" : b.substr(tb);
    if (na.size() != nb.size()) return na.size() < nb.size();
    if (na != nb) return na < nb;
    return a < b;
  }
  return a < b;
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("manifest not found: " + manifest.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest is empty: " + manifest.string());
  strip_cr(line);
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  if (split_csv_line(line) != std::vector<std::string>{"subject_id", "camera_id", "index", "path"}) {
    throw DataError("manifest header must be subject_id,camera_id,index,path; got: " + line);
  }
  const auto base = manifest.parent_path();
  std::vector<ManifestRow> rows;
  std::set<std::tuple<std::string, std::string, std::size_t>> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) {
      throw DataError("manifest line " + std::to_string(lineno) + ": expected 4 fields, got " +
                      std::to_string(f.size()));
    }
    ManifestRow row;
    row.subject_id = f[0];
    row.camera_id = f[1];
    if (!is_number(f[2])) {
      throw DataError("manifest line " + std::to_string(lineno) + ": index is not a number: " + f[2]);
    }
    row.index = std::stoull(f[2]);
    row.path = base / std::filesystem::path(f[3]);
    if (!seen.emplace(row.subject_id, row.camera_id, row.index).second) {
      throw DataError("manifest line " + std::to_string(lineno) + ": duplicate row (" +
                      row.subject_id + ", " + row.camera_id + ", " + f[2] + ")");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_manifest(const std::filesystem::path& manifest, std::span<const ManifestRow> rows) {
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + manifest.string());
  out << "subject_id,camera_id,index,path\n";
  const auto base = manifest.parent_path();
  for (const auto& r : rows) {
    const auto rel = r.path.is_absolute() ? std::filesystem::relative(r.path, base) : r.path;
    out << csv_field(r.subject_id) << ',' << csv_field(r.camera_id) << ',' << r.index << ','
        << csv_field(rel.generic_string()) << '\n';
  }
}

std::vector<PersonImage> load_manifest(const std::filesystem::path& manifest,
                                       const Geometry& geometry, std::size_t threads) {
  const auto rows = read_manifest(manifest);
  std::vector<PersonImage> images(rows.size());
  parallel_for(rows.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) {
      PersonImage img;
      img.subject_id = rows[i].subject_id;
      img.camera_id = rows[i].camera_id;
      img.index = rows[i].index;
      img.pixels = read_image_rgb(rows[i].path);
      images[i] = preprocess(std::move(img), geometry);
    }
  });
  return images;
}

// ---- augmentation and parts -------------------------------------------------

PersonImage mirror(const PersonImage& image) {
  require_rank("mirror", image.pixels, 3);
  PersonImage out = image;
  const std::size_t c = image.pixels.dim(0), h = image.pixels.dim(1), w = image.pixels.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.pixels.at(ch, y, x) = image.pixels.at(ch, y, w - 1 - x);
  out.mirrored = !image.mirrored;
  return out;
}

std::vector<PersonImage> with_mirrors(std::span<const PersonImage> images) {
  std::vector<PersonImage> out(images.begin(), images.end());
  out.reserve(2 * images.size());
  for (const auto& img : images) out.push_back(mirror(img));
  return out;
}

PartStack crop_parts(const Tensor& pixels, const PartScheme& scheme) {
  require_rank("crop_parts", pixels, 3);
  const std::size_t c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
  PartStack stack;
  for (std::size_t p = 0; p < kNumParts; ++p) {
    const std::size_t off = scheme.offsets[p];
    if (off + scheme.part_height > h) {
      throw DimensionError("crop_parts: axis 1 (height) is " + std::to_string(h) + " but part " +
                           std::to_string(p) + " spans rows [" + std::to_string(off) + ", " +
                           std::to_string(off + scheme.part_height) + ")");
    }
    Tensor part({c, scheme.part_height, w});
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < scheme.part_height; ++y)
        std::copy_n(pixels.raw() + (ch * h + off + y) * w, w, &part.at(ch, y, 0));
    stack.parts[p] = std::move(part);
  }
  return stack;
}

// ---- split protocols --------------------------------------------------------

std::string to_string(Protocol p) { return p == Protocol::ViperStyle ? "viper_style" : "prid_style"; }

Protocol protocol_from_string(const std::string& s) {
  if (s == "viper_style" || s == "viper") return Protocol::ViperStyle;
  if (s == "prid_style" || s == "prid") return Protocol::PridStyle;
  throw UsageError("unknown protocol '" + s + "' (expected viper_style or prid_style)");
}

std::string to_string(Role r) {
  switch (r) {
    case Role::Train: return "train";
    case Role::Probe: return "probe";
    case Role::Gallery: return "gallery";
  }
  return "?";
}

namespace {

Role role_from_string(const std::string& s) {
  if (s == "train") return Role::Train;
  if (s == "probe") return Role::Probe;
  if (s == "gallery") return Role::Gallery;
  throw DataError("split file: unknown role '" + s + "'");
}

struct CameraIndex {
  std::string cam_a, cam_b;
  std::vector<std::string> in_a, in_b, shared;  // subject-sorted
};

CameraIndex index_cameras(std::span<const PersonImage> dataset) {
  std::map<std::string, std::set<std::string>> by_camera;
  for (const auto& img : dataset) by_camera[img.camera_id].insert(img.subject_id);
  if (by_camera.size() != 2) {
    throw ProtocolError("split protocols need exactly 2 cameras, dataset has " +
                        std::to_string(by_camera.size()));
  }
  CameraIndex ci;
  auto it = by_camera.begin();
  ci.cam_a = it->first;
  ci.in_a.assign(it->second.begin(), it->second.end());
  ++it;
  ci.cam_b = it->first;
  ci.in_b.assign(it->second.begin(), it->second.end());
  std::sort(ci.in_a.begin(), ci.in_a.end(), subject_less);
  std::sort(ci.in_b.begin(), ci.in_b.end(), subject_less);
  const std::set<std::string> b(ci.in_b.begin(), ci.in_b.end());
  for (const auto& s : ci.in_a)
    if (b.count(s)) ci.shared.push_back(s);
  return ci;
}

}  // namespace

std::vector<std::string> SplitAssignment::subjects(Role role) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (e.role == role) out.push_back(e.subject_id);
  return out;
}

SplitAssignment make_split(std::span<const PersonImage> dataset, const SplitSpec& spec) {
  const CameraIndex ci = index_cameras(dataset);
  SplitAssignment split;
  split.probe_camera = ci.cam_a;
  split.gallery_camera = ci.cam_b;
  Rng rng{spec.seed, spec.repeat, static_cast<std::uint64_t>(spec.protocol)};

  if (spec.protocol == Protocol::ViperStyle) {
    if (ci.shared.size() < 2) {
      throw ProtocolError("viper_style needs >= 2 subjects seen by both cameras, found " +
                          std::to_string(ci.shared.size()));
    }
    std::vector<std::string> subjects = ci.shared;
    rng.shuffle(std::span<std::string>(subjects));
    const std::size_t half = subjects.size() / 2;
    std::vector<std::string> train(subjects.begin(), subjects.begin() + half);
    std::vector<std::string> test(subjects.begin() + half, subjects.end());
    std::sort(train.begin(), train.end(), subject_less);
    std::sort(test.begin(), test.end(), subject_less);
    for (const auto& s : train) split.entries.push_back({s, Role::Train});
    for (const auto& s : test) split.entries.push_back({s, Role::Probe});
    for (const auto& s : test) split.entries.push_back({s, Role::Gallery});
    return split;
  }

  constexpr std::size_t kShared = 200, kTrain = 100;
  if (ci.shared.size() < kShared) {
    throw ProtocolError("prid_style needs >= 200 subjects seen by both cameras, found " +
                        std::to_string(ci.shared.size()) + " (camera " + ci.cam_a + ": " +
                        std::to_string(ci.in_a.size()) + ", camera " + ci.cam_b + ": " +
                        std::to_string(ci.in_b.size()) + ")");
  }
  std::vector<std::string> first(ci.shared.begin(), ci.shared.begin() + kShared);
  rng.shuffle(std::span<std::string>(first));
  std::vector<std::string> train(first.begin(), first.begin() + kTrain);
  std::vector<std::string> probe(first.begin() + kTrain, first.end());
  std::sort(train.begin(), train.end(), subject_less);
  std::sort(probe.begin(), probe.end(), subject_less);
  const std::set<std::string> train_set(train.begin(), train.end());
  for (const auto& s : train) split.entries.push_back({s, Role::Train});
  for (const auto& s : probe) split.entries.push_back({s, Role::Probe});
  for (const auto& s : ci.in_b)
    if (!train_set.count(s)) split.entries.push_back({s, Role::Gallery});
  return split;
}

SplitSets apply_split(std::span<const PersonImage> dataset, const SplitAssignment& split) {
  std::set<std::string> train, probe, gallery;
  for (const auto& e : split.entries) {
    (e.role == Role::Train ? train : e.role == Role::Probe ? probe : gallery).insert(e.subject_id);
  }
  SplitSets sets;
  for (const auto& img : dataset) {
    if (train.count(img.subject_id)) {
      sets.train.push_back(img);
      continue;
    }
    if (img.camera_id == split.probe_camera && probe.count(img.subject_id)) sets.probe.push_back(img);
    if (img.camera_id == split.gallery_camera && gallery.count(img.subject_id))
      sets.gallery.push_back(img);
  }
  return sets;
}

void write_split(const std::filesystem::path& path, const SplitAssignment& split) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write split file: " + path.string());
  out << "# cameras," << csv_field(split.probe_camera) << ',' << csv_field(split.gallery_camera)
      << '\n';
  out << "subject_id,role\n";
  for (const auto& e : split.entries) out << csv_field(e.subject_id) << ',' << to_string(e.role) << '\n';
}

SplitAssignment read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("split file not found: " + path.string());
  SplitAssignment split;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    if (line.rfind("# cameras,", 0) == 0) {
      const auto f = split_csv_line(line.substr(2));
      if (f.size() != 3) throw DataError("split file: malformed camera line");
      split.probe_camera = f[1];
      split.gallery_camera = f[2];
      continue;
    }
    if (line[0] == '#') continue;
    const auto f = split_csv_line(line);
    if (!header) {
      if (f != std::vector<std::string>{"subject_id", "role"})
        throw DataError("split file header must be subject_id,role");
      header = true;
      continue;
    }
    if (f.size() != 2) throw DataError("split file: expected 2 fields in line: " + line);
    split.entries.push_back({f[0], role_from_string(f[1])});
  }
  if (!header) throw DataError("split file has no header: " + path.string());
  if (split.probe_camera.empty()) throw DataError("split file lacks the '# cameras' line");
  return split;
}

}  // namespace siamnet::data
