#pragma once

// KITTI odometry ingestion: calib.txt parsing, Velodyne .bin decoding, split
// lists and the lazily loaded calibration sample stream.
//
// Expected layout:
//   <root>/sequences/<id>/calib.txt
//   <root>/sequences/<id>/velodyne/<frame>.bin
//   <root>/sequences/<id>/image_2/<frame>.png   (optional, referenced only)

#include <algorithm>
#include <cmath>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "lsdcalib/denoiser.hpp"
#include "lsdcalib/errors.hpp"
#include "lsdcalib/format.hpp"
#include "lsdcalib/geometry.hpp"
#include "lsdcalib/hash.hpp"
#include "lsdcalib/se3.hpp"

namespace lsdcalib::kitti {

namespace fs = std::filesystem;

inline constexpr int kDefaultImageWidth = 1241;
inline constexpr int kDefaultImageHeight = 376;
inline constexpr double kMaxCalibDrift = 1e-3;

/// One "KEY: v1 v2 ..." line of calib.txt.
struct CalibEntry {
  std::string key;
  std::vector<double> values;
};

struct KittiCalib {
  Intrinsics intrinsics;            // from P2
  SE3Transform t_velo_to_cam;       // from Tr
  Vector3 p2_offset = Vector3::Zero();  // fourth column of P2
  std::vector<CalibEntry> entries;  // every line, in file order

  const CalibEntry* find(std::string_view key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  }

  /// Tr with the P2 translation term folded in: the P2 column is
  /// K * (baseline offset), so the offset in camera coordinates is
  /// K^-1 * column.
  SE3Transform folded_extrinsic() const {
    const Vector3 shift = intrinsics.matrix().inverse() * p2_offset;
    Matrix4 m = t_velo_to_cam.matrix();
    m.topRightCorner<3, 1>() += shift;
    return SE3Transform::from_matrix(m);
  }
};

/// Parses calib.txt text. Needs "P2:" and "Tr:" lines with 12 floats each;
/// other keys are kept verbatim for re-serialization.
inline KittiCalib parse_kitti_calib(std::string_view text, int image_width = kDefaultImageWidth,
                                    int image_height = kDefaultImageHeight) {
  KittiCalib calib;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (eol == text.size()) break;
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError("calib line " + std::to_string(line_no) + ": missing ':'");
    }
    CalibEntry entry;
    entry.key = std::string(line.substr(0, colon));
    std::istringstream ss{std::string(line.substr(colon + 1))};
    std::string tok;
    while (ss >> tok) {
      double v;
      if (!parse_double(tok, v) || !std::isfinite(v)) {
        throw ParseError("calib line " + std::to_string(line_no) + " (" + entry.key + "): bad value '" + tok + "'");
      }
      entry.values.push_back(v);
    }
    calib.entries.push_back(std::move(entry));
    if (eol == text.size()) break;
  }

  const auto need12 = [&](std::string_view key) -> const CalibEntry& {
    const CalibEntry* e = calib.find(key);
    if (e == nullptr) throw ParseError("calib: missing '" + std::string(key) + ":' line");
    if (e->values.size() != 12) {
      throw ParseError("calib line '" + std::string(key) + ":' has " + std::to_string(e->values.size()) +
                       " values, expected 12");
    }
    return *e;
  };

  const auto& p2 = need12("P2").values;
  calib.intrinsics = Intrinsics{p2[0], p2[5], p2[2], p2[6], p2[1], image_width, image_height};
  calib.p2_offset = Vector3(p2[3], p2[7], p2[11]);
  try {
    calib.intrinsics.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("calib line 'P2:': ") + e.what());
  }

  // Published Tr rotations are orthonormal only to ~1e-7, so the rotation is
  // projected onto SO(3). The raw values stay in `entries`.
  const auto& tr = need12("Tr").values;
  Matrix3 r;
  Vector3 t;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 3; ++c) r(i, c) = tr[4 * i + c];
    t[i] = tr[4 * i + 3];
  }
  if (SE3Transform::orthogonality_drift(r) > kMaxCalibDrift || r.determinant() <= 0.0) {
    throw ParseError("calib line 'Tr:': rotation block is not a rotation");
  }
  if (SE3Transform::orthogonality_drift(r) > kReorthoThreshold) r = lsdcalib::detail::project_to_so3(r);
  calib.t_velo_to_cam = SE3Transform::from_rt(r, t);
  return calib;
}

/// Writes every entry back as "KEY: v1 v2 ..." with shortest round-trip
/// formatting.
inline std::string serialize_kitti_calib(const KittiCalib& calib) {
  std::string out;
  for (const auto& e : calib.entries) {
    out += e.key;
    out += ':';
    for (double v : e.values) {
      out += ' ';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Velodyne

struct VelodyneScan {
  PointCloud cloud;
  std::size_t dropped = 0;  // records with non-finite values
};

namespace detail {
inline float read_le_float(const unsigned char* p) {
  const std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                          (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &u, sizeof(f));
  return f;
}
}  // namespace detail

/// Little-endian float32 quadruples (x, y, z, reflectance).
inline VelodyneScan read_velodyne_bin(std::span<const unsigned char> bytes) {
  if (bytes.size() % 16 != 0) {
    throw FormatError("velodyne data length " + std::to_string(bytes.size()) + " is not a multiple of 16");
  }
  VelodyneScan scan;
  const std::size_t n = bytes.size() / 16;
  scan.cloud.points.reserve(n);
  scan.cloud.intensity.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + 16 * i;
    const float x = detail::read_le_float(rec);
    const float y = detail::read_le_float(rec + 4);
    const float z = detail::read_le_float(rec + 8);
    const float r = detail::read_le_float(rec + 12);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) || !std::isfinite(r)) {
      ++scan.dropped;
      continue;
    }
    scan.cloud.points.emplace_back(x, y, z);
    scan.cloud.intensity.push_back(r);
  }
  return scan;
}

inline std::vector<unsigned char> read_file_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline std::string read_file_text(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline VelodyneScan read_velodyne_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return read_velodyne_bin(bytes);
}

/// Width and height from a PNG IHDR chunk, without decoding pixels.
inline std::optional<std::pair<int, int>> png_dimensions(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  std::array<unsigned char, 24> h{};
  if (!is.read(reinterpret_cast<char*>(h.data()), h.size())) return std::nullopt;
  static constexpr std::array<unsigned char, 8> sig{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (!std::equal(sig.begin(), sig.end(), h.begin()) || std::memcmp(h.data() + 12, "IHDR", 4) != 0) {
    return std::nullopt;
  }
  const auto be32 = [&](std::size_t o) {
    return static_cast<int>((static_cast<std::uint32_t>(h[o]) << 24) | (static_cast<std::uint32_t>(h[o + 1]) << 16) |
                            (static_cast<std::uint32_t>(h[o + 2]) << 8) | static_cast<std::uint32_t>(h[o + 3]));
  };
  return std::make_pair(be32(16), be32(20));
}

// ---------------------------------------------------------------------------
// Splits and samples

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  /// Sequences 00-08,10,12 / 16-18 / 13-15,20,21.
  static SplitSpec standard() {
    return {{"00", "02", "03", "04", "05", "06", "07", "08", "10", "12"}, {"16", "17", "18"}, {"13", "14", "15", "20", "21"}};
  }

  void validate() const {
    const auto clash = [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
      return std::any_of(a.begin(), a.end(), [&](const auto& s) { return std::find(b.begin(), b.end(), s) != b.end(); });
    };
    if (clash(train, val) || clash(train, test) || clash(val, test)) {
      throw InvalidArgument("split lists must be pairwise disjoint");
    }
  }
};

enum class SplitPart { train, val, test };

inline SplitPart parse_split_part(std::string_view s) {
  if (s == "train") return SplitPart::train;
  if (s == "val") return SplitPart::val;
  if (s == "test") return SplitPart::test;
  throw InvalidArgument("unknown split '" + std::string(s) + "' (train, val, test)");
}

inline const std::vector<std::string>& split_sequences(const SplitSpec& split, SplitPart part) {
  switch (part) {
    case SplitPart::train: return split.train;
    case SplitPart::val: return split.val;
    case SplitPart::test: return split.test;
  }
  return split.test;
}

struct CalibSample {
  std::string sample_id;  // "<sequence>/<frame>"
  Condition condition;
  SE3Transform t_gt;
  SE3Transform t0;
};

/// Perturbation seed for one sample: base seed plus a stable hash of its id,
/// so subsetting the dataset does not reshuffle perturbations.
inline std::uint64_t sample_seed(std::uint64_t base_seed, std::string_view sample_id) {
  return base_seed + fnv1a64(sample_id);
}

struct LoaderOptions {
  bool fold_p2_offset = false;
  std::size_t max_samples = 0;  // 0 = unlimited
  std::size_t frame_stride = 1;
};

/// Lazily yields calibration samples ordered by (sequence, frame). Frames are
/// indexed up front; clouds are read on demand. Unreadable sequences or frames
/// are skipped and counted.
class SampleStream {
 public:
  SampleStream(fs::path root, const SplitSpec& split, SplitPart part, PerturbationSpec perturbation,
               LoaderOptions options = {})
      : root_(std::move(root)), perturbation_(perturbation), options_(options) {
    split.validate();
    perturbation_.validate();
    if (options_.frame_stride == 0) throw InvalidArgument("frame stride must be >= 1");
    auto sequences = split_sequences(split, part);
    std::sort(sequences.begin(), sequences.end());
    for (const auto& seq : sequences) index_sequence(seq);
    if (frames_.empty()) {
      throw DatasetError("no frames found under " + root_.string() + " for the requested split");
    }
  }

  /// Next sample, or nullopt when exhausted. Throws DatasetError if the stream
  /// ends without yielding anything.
  std::optional<CalibSample> next() {
    while (cursor_ < frames_.size()) {
      if (options_.max_samples != 0 && yielded_ >= options_.max_samples) break;
      const Frame& f = frames_[cursor_++];
      VelodyneScan scan;
      try {
        scan = read_velodyne_file(f.bin_path);
      } catch (const Error&) {
        ++skipped_;
        continue;
      }
      dropped_points_ += scan.dropped;
      const Sequence& seq = sequences_[f.sequence];
      CalibSample s;
      s.sample_id = seq.id + "/" + f.frame;
      Condition cond(std::make_shared<const PointCloud>(std::move(scan.cloud)), seq.intrinsics, f.image_ref);
      cond.sample_id = s.sample_id;
      cond.cloud_path = f.bin_path.string();
      s.condition = std::move(cond);
      s.t_gt = seq.t_gt;
      PerturbationSpec spec = perturbation_;
      spec.seed = sample_seed(perturbation_.seed, s.sample_id);
      s.t0 = perturb_extrinsic(s.t_gt, spec);
      ++yielded_;
      return s;
    }
    if (yielded_ == 0) throw DatasetError("dataset yielded no readable samples");
    return std::nullopt;
  }

  std::size_t indexed_frames() const { return frames_.size(); }
  std::size_t skipped() const { return skipped_; }
  std::size_t skipped_sequences() const { return skipped_sequences_; }
  std::size_t dropped_points() const { return dropped_points_; }
  std::vector<std::string> visited_sequences() const {
    std::vector<std::string> out;
    for (const auto& s : sequences_) out.push_back(s.id);
    return out;
  }

 private:
  struct Sequence {
    std::string id;
    Intrinsics intrinsics;
    SE3Transform t_gt;
  };
  struct Frame {
    std::size_t sequence;
    std::string frame;
    fs::path bin_path;
    std::optional<std::string> image_ref;
  };

  void index_sequence(const std::string& id) {
    const fs::path dir = root_ / "sequences" / id;
    const fs::path velo = dir / "velodyne";
    std::error_code ec;
    if (!fs::is_directory(velo, ec) || !fs::is_regular_file(dir / "calib.txt", ec)) {
      ++skipped_sequences_;
      return;
    }
    std::vector<fs::path> bins;
    for (const auto& entry : fs::directory_iterator(velo, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == ".bin") bins.push_back(entry.path());
    }
    std::sort(bins.begin(), bins.end());
    if (bins.empty()) {
      ++skipped_sequences_;
      return;
    }

    const fs::path image_dir = dir / "image_2";
    int width = kDefaultImageWidth, height = kDefaultImageHeight;
    if (auto dims = png_dimensions(image_dir / (bins.front().stem().string() + ".png"))) {
      std::tie(width, height) = *dims;
    }
    KittiCalib calib;
    try {
      calib = parse_kitti_calib(read_file_text(dir / "calib.txt"), width, height);
    } catch (const Error&) {
      ++skipped_sequences_;
      return;
    }
    const std::size_t seq_index = sequences_.size();
    sequences_.push_back({id, calib.intrinsics,
                          options_.fold_p2_offset ? calib.folded_extrinsic() : calib.t_velo_to_cam});

    for (std::size_t i = 0; i < bins.size(); i += options_.frame_stride) {
      Frame f{seq_index, bins[i].stem().string(), bins[i], std::nullopt};
      const fs::path img = image_dir / (f.frame + ".png");
      if (fs::is_regular_file(img, ec)) f.image_ref = img.string();
      frames_.push_back(std::move(f));
    }
  }

  fs::path root_;
  PerturbationSpec perturbation_;
  LoaderOptions options_;
  std::vector<Sequence> sequences_;
  std::vector<Frame> frames_;
  std::size_t cursor_ = 0;
  std::size_t yielded_ = 0;
  std::size_t skipped_ = 0;
  std::size_t skipped_sequences_ = 0;
  std::size_t dropped_points_ = 0;
};

inline SampleStream load_samples(const fs::path& root, const SplitSpec& split, SplitPart part,
                                 const PerturbationSpec& perturbation, LoaderOptions options = {}) {
  return SampleStream(root, split, part, perturbation, options);
}

}  // namespace lsdcalib::kitti
