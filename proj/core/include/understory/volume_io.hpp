#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "understory/aperture.hpp"
#include "understory/grid.hpp"
#include "understory/receptive_field.hpp"

namespace understory {

// ---- raw volumes -----------------------------------------------------------

enum class VolumeKind : std::uint8_t { Reflectance = 0, Index = 1, Mask = 2, Depth = 3, FocalSignal = 4, GroundTruth = 5 };

std::string to_string(VolumeKind kind);

/// Generic stack on disk. `flags` bit 0 is the valid/mask/occupied bit,
/// bit 1 marks a zero NDVI denominator.
struct VolumeFile {
  VolumeKind kind = VolumeKind::Reflectance;
  StackGeometry geometry;
  std::vector<float> values;
  std::vector<std::uint8_t> flags;
  std::vector<std::string> labels;  // per-layer provenance, optional
};

/// Magic "DFVL", u16 version, endianness tag, kind, dims, extents, heights,
/// float32 values, flag bytes, labels, trailing CRC-32; all little-endian.
std::vector<std::uint8_t> encode_volume(const VolumeFile& volume);
VolumeFile decode_volume(const std::vector<std::uint8_t>& bytes);
void write_volume(const std::string& path, const VolumeFile& volume);
VolumeFile read_volume(const std::string& path);

VolumeFile to_volume(const FocalStack& stack);
VolumeFile to_volume(const ReflectanceStack& stack);
VolumeFile to_volume(const IndexStack& stack);
VolumeFile to_volume(const GroundTruthVolume& truth);
/// Depth map as a one-layer volume of layer indices; gaps have the flag cleared.
VolumeFile to_volume(const DepthMap& depth, const StackGeometry& geometry);

FocalStack as_focal_stack(const VolumeFile& v);
ReflectanceStack as_reflectance_stack(const VolumeFile& v);
IndexStack as_index_stack(const VolumeFile& v);
GroundTruthVolume as_ground_truth(const VolumeFile& v);
DepthMap as_depth_map(const VolumeFile& v);

// ---- per-layer 16-bit graymaps ----------------------------------------------

/// round(v * 65535), v in [0, 1].
std::uint16_t quantize16(float v);
float dequantize16(std::uint16_t q);

/// Writes `layer_NNNN.pgm` per stack layer (binary 16-bit PGM, image row 0 =
/// largest y). Values must lie in [0, 1]; a stack holding the index sentinel
/// is refused unless `sentinel_remap` supplies a replacement. Returns the paths.
std::vector<std::string> write_layers(const std::string& directory, const Dims3& dims, std::span<const float> values,
                                      std::optional<float> sentinel_remap = std::nullopt);

struct LayerImages {
  Dims3 dims;
  std::vector<float> values;
};

/// Reads `layer_NNNN.pgm` files 0, 1, ... of `expected_layers` (or until the
/// first missing one when 0).
LayerImages read_layers(const std::string& directory, int expected_layers = 0);

struct Graymap {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::vector<std::uint16_t> samples;
};

void write_pgm(const std::string& path, const Graymap& image);
Graymap read_pgm(const std::string& path);
/// Image normalized to [0, 1] by the maxval.
Image read_image(const std::string& path);
void write_image16(const std::string& path, const Image& image);

// ---- VTK ImageData ----------------------------------------------------------

struct VtiArray {
  std::string name;
  std::vector<float> values;
};

struct VtiVolume {
  Dims3 dims;
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Vector3d spacing = Eigen::Vector3d::Ones();
  std::vector<VtiArray> arrays;
};

/// Spacing extent / dims laterally and the layer pitch axially; origin at the
/// centre of cell (0, 0) on the first layer.
VtiVolume make_vti(const StackGeometry& geometry, std::vector<VtiArray> arrays);
/// Colour first (`channels_and_opacity`), opacity second (`opacity`).
VtiVolume make_vti_color_opacity(const StackGeometry& geometry, std::span<const float> color,
                                 std::span<const float> opacity);

void write_vti(std::ostream& out, const VtiVolume& volume);
void write_vti(const std::string& path, const VtiVolume& volume);
VtiVolume read_vti(std::istream& in);
VtiVolume read_vti(const std::string& path);

// ---- datasets ----------------------------------------------------------------

/// Magic "DFPD": header with patch dims, counts, layer and endianness tag,
/// then per patch its float32 tensor, target (NaN when void), void flag,
/// split, plot and lateral index; trailing CRC-32.
std::vector<std::uint8_t> encode_dataset(const PatchDataset& dataset);
PatchDataset decode_dataset(const std::vector<std::uint8_t>& bytes);
void write_dataset(const std::string& path, const PatchDataset& dataset);
PatchDataset read_dataset(const std::string& path);

// ---- poses, scans, point clouds, manifests ----------------------------------

/// `x y z qw qx qy qz` per line; `#` starts a comment.
std::vector<CameraPose> read_poses_text(std::istream& in);
void write_poses_text(std::ostream& out, std::span<const CameraPose> poses);
/// {"poses": [{"position": [x, y, z], "quaternion": [w, x, y, z]}, ...]} or a bare array.
std::vector<CameraPose> read_poses_json(std::istream& in);
/// Chooses the JSON reader for `.json` files.
std::vector<CameraPose> read_poses(const std::string& path);

/// Directory with poses.txt (or poses.json), camera.txt (`fov_deg = ...`)
/// and one graymap per pose whose numeric file-name part gives its order.
ApertureScan read_scan(const std::string& directory);
void write_scan(const std::string& directory, const ApertureScan& scan);

/// `x y z` per line; `#` starts a comment.
std::vector<Eigen::Vector3d> read_point_cloud(std::istream& in);
void write_point_cloud(std::ostream& out, std::span<const Eigen::Vector3d> points);

/// `key = value` lines in file order; `#` starts a comment. Duplicate keys are rejected.
using Manifest = std::vector<std::pair<std::string, std::string>>;
Manifest read_manifest(std::istream& in);
Manifest read_manifest(const std::string& path);
void write_manifest(std::ostream& out, const Manifest& manifest);

}  // namespace understory
