#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "siamnet/network.hpp"
#include "siamnet/tensor.hpp"

namespace siamnet::data {

/// Target size of preprocessed images.
struct Geometry {
  std::size_t height = 128;
  std::size_t width = 48;
};

struct PersonImage {
  std::string subject_id;
  std::string camera_id;
  std::size_t index = 0;
  /// [3,H,W]. Raw pixels are in [0,255]; after preprocessing they are
  /// mapped to [-1,1] by (p/255 - 0.5) * 2.
  Tensor pixels;
  bool mirrored = false;
  bool normalized = false;
};

// ---- images ---------------------------------------------------------------

/// Decodes any format OpenCV reads into an RGB [3,H,W] tensor in [0,255].
Tensor read_image_rgb(const std::filesystem::path& path);
/// Writes an RGB [3,H,W] tensor with values in [0,255] (rounded, clamped).
void write_image_rgb(const std::filesystem::path& path, const Tensor& rgb);

/// Bilinear resampling with pixel-center alignment:
/// src = (dst + 0.5) * in/out - 0.5, clamped to the border.
Tensor resize_bilinear(const Tensor& chw, std::size_t height, std::size_t width);

/// (p/255 - 0.5) * 2 elementwise.
Tensor normalize_pixels(const Tensor& raw);

/// Resize to `geometry` and normalize. Already-preprocessed images of the
/// right size are returned unchanged.
PersonImage preprocess(PersonImage image, const Geometry& geometry);

// ---- manifest ---------------------------------------------------------------

struct ManifestRow {
  std::string subject_id;
  std::string camera_id;
  std::size_t index = 0;
  std::filesystem::path path;  ///< resolved against the manifest directory
};

/// CSV with header `subject_id,camera_id,index,path`. Rejects duplicate
/// (subject, camera, index) rows.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, std::span<const ManifestRow> rows);

/// Reads the manifest, decodes each image and preprocesses it to `geometry`.
std::vector<PersonImage> load_manifest(const std::filesystem::path& manifest,
                                       const Geometry& geometry, std::size_t threads = 1);

// ---- augmentation and parts -------------------------------------------------

/// Horizontal flip; toggles `mirrored`.
PersonImage mirror(const PersonImage& image);

/// Appends the mirror of every image (order: all originals, then mirrors).
std::vector<PersonImage> with_mirrors(std::span<const PersonImage> images);

/// Crops the part bands of a [C,H,W] image.
PartStack crop_parts(const Tensor& pixels, const PartScheme& scheme);

// ---- split protocols --------------------------------------------------------

enum class Protocol { ViperStyle, PridStyle };

/// Repeat 0 is the development split, 1..10 the test splits.
inline constexpr std::size_t kDefaultRepeats = 11;

struct SplitSpec {
  Protocol protocol = Protocol::ViperStyle;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
};

enum class Role { Train, Probe, Gallery };

struct SplitEntry {
  std::string subject_id;
  Role role;
};

/// Subject roles of one split. A subject can be both probe and gallery.
struct SplitAssignment {
  std::vector<SplitEntry> entries;
  /// Camera whose images serve as probes (the other camera is the gallery).
  std::string probe_camera;
  std::string gallery_camera;

  std::vector<std::string> subjects(Role role) const;
};

/// viper_style: random half of the subjects train, the rest are probe
/// (camera A) and gallery (camera B). prid_style: 100 of the first 200
/// subjects seen by both cameras train; the other 100 are probes; the
/// gallery is every camera-B subject except the training ones.
/// Camera A is the lexicographically first camera id.
SplitAssignment make_split(std::span<const PersonImage> dataset, const SplitSpec& spec);

struct SplitSets {
  std::vector<PersonImage> train;
  std::vector<PersonImage> probe;
  std::vector<PersonImage> gallery;
};

/// Selects the images of each role: every training-subject image from both
/// cameras; probe-camera images of probe subjects; gallery-camera images of
/// gallery subjects.
SplitSets apply_split(std::span<const PersonImage> dataset, const SplitAssignment& split);

/// CSV `subject_id,role` plus a `# cameras,<probe>,<gallery>` comment line.
void write_split(const std::filesystem::path& path, const SplitAssignment& split);
SplitAssignment read_split(const std::filesystem::path& path);

std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);
std::string to_string(Role r);

// ---- synthetic data ---------------------------------------------------------

struct SyntheticOptions {
  std::size_t subjects = 40;
  std::size_t cameras = 2;
  Geometry geometry{48, 16};
  double noise_sigma = 12.0;   ///< pixel noise, in [0,255] units
  double illumination = 0.25;  ///< max relative per-camera brightness change
  std::size_t max_shift = 1;   ///< random horizontal/vertical jitter, pixels
  std::uint64_t seed = 7;
};

/// Person-like images: head, torso and leg blocks with subject-specific
/// colors and a torso stripe pattern, rendered once per camera with a
/// camera-specific illumination and color cast, jitter and noise.
/// Subject ids are "s000".."sNNN", cameras "camA", "camB"; raw [0,255] pixels.
std::vector<PersonImage> make_synthetic_dataset(const SyntheticOptions& options);

}  // namespace siamnet::data
