#include "understory/aperture.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "understory/error.hpp"
#include "understory/scene_sim.hpp"

namespace understory {

Rect ApertureSquare::frustum_section(double apex_x, double apex_y, double f, double z) const {
  require_input(f < altitude, "focal height must lie below the aperture altitude");
  const double s = (z - f) / (altitude - f);
  const Rect sa = rect();
  return {apex_x + s * (sa.x0 - apex_x), apex_y + s * (sa.y0 - apex_y), apex_x + s * (sa.x1 - apex_x),
          apex_y + s * (sa.y1 - apex_y)};
}

void ApertureScan::finalize() {
  require_input(!poses.empty(), "scan has no poses");
  double xmin = poses[0].position.x(), xmax = xmin;
  double ymin = poses[0].position.y(), ymax = ymin;
  for (const auto& p : poses) {
    xmin = std::min(xmin, p.position.x());
    xmax = std::max(xmax, p.position.x());
    ymin = std::min(ymin, p.position.y());
    ymax = std::max(ymax, p.position.y());
  }
  aperture_side = std::max(xmax - xmin, ymax - ymin);
  altitude = poses[0].position.z();
  validate();
}

void ApertureScan::validate() const {
  intrinsics.validate();
  require(!poses.empty(), ErrorKind::InvalidInput, "scan has no poses");
  require(poses.size() == images.size(), ErrorKind::CountMismatch,
          "scan has " + std::to_string(images.size()) + " images for " + std::to_string(poses.size()) + " poses");
  for (const auto& p : poses) {
    p.validate();
    require(std::abs(p.position.z() - altitude) <= 1e-6, ErrorKind::Invariant,
            "all poses of a planar aperture must share one altitude");
  }
  for (const auto& img : images) {
    require(img.width == intrinsics.image_size && img.height == intrinsics.image_size, ErrorKind::ImageShape,
            "image size does not match the camera intrinsics");
  }
}

ApertureSquare ApertureScan::square() const {
  double xmin = poses[0].position.x(), xmax = xmin;
  double ymin = poses[0].position.y(), ymax = ymin;
  for (const auto& p : poses) {
    xmin = std::min(xmin, p.position.x());
    xmax = std::max(xmax, p.position.x());
    ymin = std::min(ymin, p.position.y());
    ymax = std::max(ymax, p.position.y());
  }
  return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax), aperture_side, altitude};
}

std::size_t ApertureScan::center_pose_index() const {
  const ApertureSquare sq = square();
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const double dx = poses[i].position.x() - sq.center_x;
    const double dy = poses[i].position.y() - sq.center_y;
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<CameraPose> plan_grid(double aperture_side, double spacing, double altitude, double center_x,
                                  double center_y) {
  require_input(spacing > 0.0, "pose spacing must be positive");
  require_input(aperture_side > 0.0 && altitude > 0.0, "aperture side and altitude must be positive");
  require_input(aperture_side >= spacing, "aperture side must be at least one spacing");
  const int n = static_cast<int>(std::floor(aperture_side / spacing + 1e-9)) + 1;
  const double span = (n - 1) * spacing;
  std::vector<CameraPose> poses;
  poses.reserve(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      poses.push_back(CameraPose::nadir_at(center_x - 0.5 * span + i * spacing, center_y - 0.5 * span + j * spacing,
                                           altitude));
    }
  }
  return poses;
}

ApertureScan render_scan(const GroundTruthVolume& volume, const std::vector<CameraPose>& poses,
                         const CameraIntrinsics& cam, float background, int workers) {
  ApertureScan scan;
  scan.poses = poses;
  scan.intrinsics = cam;
  scan.images.reserve(poses.size());
  for (const auto& p : poses) scan.images.push_back(render_aerial(volume, p, cam, background, workers));
  scan.finalize();
  return scan;
}

namespace {

// Accumulates one pose into running per-cell sums.
void accumulate_pose(const Image& image, const CameraPose& pose, const CameraIntrinsics& cam, double f,
                     const FocalGrid& grid, std::span<double> sum, std::span<std::uint32_t> hits,
                     std::span<float> sample_out, std::span<std::uint8_t> hit_out) {
  const double cw = grid.extent / grid.w;
  const double ch = grid.extent / grid.h;
  const double lo = -0.5;
  const double hi_c = image.width - 0.5;
  const double hi_r = image.height - 0.5;
  for (int j = 0; j < grid.h; ++j) {
    for (int i = 0; i < grid.w; ++i) {
      const std::size_t idx = static_cast<std::size_t>(j) * grid.w + i;
      const auto px = project(pose, cam, Eigen::Vector3d((i + 0.5) * cw, (j + 0.5) * ch, f));
      if (!px || px->col < lo || px->col > hi_c || px->row < lo || px->row > hi_r) continue;
      const double c = std::clamp(px->col, 0.0, image.width - 1.0);
      const double r = std::clamp(px->row, 0.0, image.height - 1.0);
      const int c0 = std::min(static_cast<int>(c), image.width - 1);
      const int r0 = std::min(static_cast<int>(r), image.height - 1);
      const int c1 = std::min(c0 + 1, image.width - 1);
      const int r1 = std::min(r0 + 1, image.height - 1);
      const double fc = c - c0;
      const double fr = r - r0;
      const double top = image.at(r0, c0) + fc * (image.at(r0, c1) - image.at(r0, c0));
      const double bot = image.at(r1, c0) + fc * (image.at(r1, c1) - image.at(r1, c0));
      const double v = top + fr * (bot - top);
      if (!sum.empty()) {
        sum[idx] += v;
        hits[idx] += 1;
      }
      if (!sample_out.empty()) {
        sample_out[idx] = static_cast<float>(v);
        hit_out[idx] = 1;
      }
    }
  }
}

void compute_slice(const ApertureScan& scan, double f, const FocalGrid& grid, float* values, std::uint8_t* valid) {
  const std::size_t n = static_cast<std::size_t>(grid.w) * grid.h;
  std::vector<double> sum(n, 0.0);
  std::vector<std::uint32_t> hits(n, 0);
  for (std::size_t p = 0; p < scan.poses.size(); ++p) {
    accumulate_pose(scan.images[p], scan.poses[p], scan.intrinsics, f, grid, sum, hits, {}, {});
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i] > 0) {
      values[i] = static_cast<float>(sum[i] / hits[i]);
      valid[i] = 1;
    } else {
      values[i] = 0.0f;
      valid[i] = 0;
    }
  }
}

}  // namespace

RegisteredImage project_to_focal_plane(const Image& image, const CameraPose& pose, const CameraIntrinsics& cam,
                                       double focal_height, const FocalGrid& grid) {
  cam.validate();
  pose.validate();
  require_input(grid.w > 0 && grid.h > 0 && grid.extent > 0.0, "focal grid must be non-empty");
  require_input(focal_height < pose.position.z(), "focal plane must lie below the camera");
  RegisteredImage out;
  out.w = grid.w;
  out.h = grid.h;
  out.values.assign(static_cast<std::size_t>(grid.w) * grid.h, 0.0f);
  out.hit.assign(out.values.size(), 0);
  accumulate_pose(image, pose, cam, focal_height, grid, {}, {}, out.values, out.hit);
  return out;
}

IntegralImage integrate(std::span<const RegisteredImage> registered) {
  require_input(!registered.empty(), "integrate needs at least one registered image");
  IntegralImage out;
  out.w = registered[0].w;
  out.h = registered[0].h;
  const std::size_t n = static_cast<std::size_t>(out.w) * out.h;
  std::vector<double> sum(n, 0.0);
  out.hits.assign(n, 0);
  for (const auto& r : registered) {
    require_input(r.w == out.w && r.h == out.h, "registered images must share one grid");
    for (std::size_t i = 0; i < n; ++i) {
      if (r.hit[i]) {
        sum[i] += r.values[i];
        out.hits[i] += 1;
      }
    }
  }
  out.values.assign(n, 0.0f);
  out.valid.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (out.hits[i] > 0) {
      out.values[i] = static_cast<float>(sum[i] / out.hits[i]);
      out.valid[i] = 1;
    }
  }
  return out;
}

FocalStack build_focal_stack(const ApertureScan& scan, const StackGeometry& geometry, int workers) {
  scan.validate();
  geometry.validate();
  require_input(geometry.plot_aligned(), "focal stacks are computed on plot-aligned square grids");
  require_input(geometry.heights.back() < scan.altitude, "focal planes must lie below the aperture altitude");

  FocalStack stack;
  stack.geometry = geometry;
  const Dims3& d = geometry.dims;
  stack.values.assign(d.count(), 0.0f);
  stack.valid.assign(d.count(), 0);
  const FocalGrid grid{d.w, d.h, geometry.extent};

  auto run = [&](int z_begin, int z_end, int z_stride) {
    for (int z = z_begin; z < z_end; z += z_stride) {
      const std::size_t off = d.index(0, 0, z);
      compute_slice(scan, geometry.heights[static_cast<std::size_t>(z)], grid, stack.values.data() + off,
                    stack.valid.data() + off);
    }
  };
  workers = std::clamp(workers, 1, d.d);
  if (workers == 1) {
    run(0, d.d, 1);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, w, d.d, workers);
    for (auto& t : pool) t.join();
  }
  return stack;
}

FocalStack build_focal_stack(const ApertureScan& scan, double z_min, double z_max, int depth, const FocalGrid& grid,
                             int workers) {
  require_input(depth >= 1, "focal stack needs at least one slice");
  require_input(depth == 1 ? z_min <= z_max : z_min < z_max, "focal range must satisfy z_min < z_max");
  require_input(z_max < scan.altitude, "focal range must lie below the aperture altitude");
  StackGeometry g;
  g.dims = {grid.w, grid.h, depth};
  g.extent = grid.extent;
  g.heights.resize(static_cast<std::size_t>(depth));
  for (int k = 0; k < depth; ++k) {
    g.heights[static_cast<std::size_t>(k)] = depth == 1 ? z_min : z_min + (z_max - z_min) * k / (depth - 1);
  }
  return build_focal_stack(scan, g, workers);
}

double defocus_weight(double aperture, double focal, double z) {
  require_input(focal != 0.0, "defocus weight undefined for zero focal distance");
  require_input(focal > 0.0, "focal distance must be positive");
  const double t = aperture / focal * std::abs(focal - z);
  return 1.0 / (1.0 + t * t);
}

std::vector<double> analytic_focal_signal(const GroundTruthVolume& volume, const ApertureSquare& aperture,
                                          double focal_height) {
  const Dims3& d = volume.dims;
  const StackGeometry geo = volume.stack_geometry();
  require_input(focal_height > 0.0 && focal_height <= volume.z_top + 1e-9,
                "focal height must lie within the volume z range");
  const double px = volume.pitch_x();
  const double py = volume.pitch_y();
  std::vector<double> out(d.layer_count(), 0.0);

  int first = 0;
  while (first < d.d && geo.heights[static_cast<std::size_t>(first)] < focal_height - 1e-9) ++first;

  for (int j = 0; j < d.h; ++j) {
    for (int i = 0; i < d.w; ++i) {
      const double ax = (i + 0.5) * px;
      const double ay = (j + 0.5) * py;
      double signal = 0.0;
      for (int k = first; k < d.d; ++k) {
        const double z = geo.heights[static_cast<std::size_t>(k)];
        const Rect r = aperture.frustum_section(ax, ay, focal_height, z);
        // Voxels whose centres fall inside the section; the containing voxel
        // when the section is smaller than one voxel.
        const int x0 = std::max(0, static_cast<int>(std::ceil(r.x0 / px - 0.5)));
        const int x1 = std::min(d.w - 1, static_cast<int>(std::floor(r.x1 / px - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(r.y0 / py - 0.5)));
        const int y1 = std::min(d.h - 1, static_cast<int>(std::floor(r.y1 / py - 0.5)));
        double sum = 0.0;
        int count = 0;
        if (x0 <= x1 && y0 <= y1) {
          for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
              if (volume.is_occupied(x, y, k)) sum += volume.at(x, y, k);
              ++count;
            }
          }
        } else {
          const int cx = std::clamp(static_cast<int>(std::floor(0.5 * (r.x0 + r.x1) / px)), 0, d.w - 1);
          const int cy = std::clamp(static_cast<int>(std::floor(0.5 * (r.y0 + r.y1) / py)), 0, d.h - 1);
          if (volume.is_occupied(cx, cy, k)) sum = volume.at(cx, cy, k);
          count = 1;
        }
        signal += defocus_weight(aperture.side, focal_height, z) * sum / count;
      }
      out[static_cast<std::size_t>(j) * d.w + i] = signal;
    }
  }
  return out;
}

double expected_visibility(double density) {
  require_input(density >= 0.0 && density <= 1.0, "density must lie in [0, 1]");
  return 1.0 - density * density;
}

}  // namespace understory
