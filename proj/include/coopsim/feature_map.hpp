#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "coopsim/errors.hpp"
#include "coopsim/geom.hpp"

namespace coopsim {

// Bird's-eye-view grid over the evaluation region around a sensor. Rows run
// along x (vehicle forward), columns along y. With moment channels enabled
// each cell also stores the point centroid relative to the cell center and
// the central second moments, which lets a detector recover sub-cell box
// geometry from a coarse grid.
struct GridSpec {
  double x_min = -140.0;
  double x_max = 140.0;
  double y_min = -40.0;
  double y_max = 40.0;
  double cell_m = 4.0;
  bool moment_channels = false;

  int height() const {
    return static_cast<int>(std::ceil((x_max - x_min) / cell_m - 1e-9));
  }
  int width() const {
    return static_cast<int>(std::ceil((y_max - y_min) / cell_m - 1e-9));
  }
  int channels() const { return moment_channels ? 10 : 5; }

  void validate() const {
    if (!(x_max > x_min) || !(y_max > y_min))
      throw UsageError("grid: empty extent");
    if (!(cell_m > 0.0)) throw UsageError("grid: cell size must be > 0");
  }

  bool cell_of(double x, double y, int& i, int& j) const {
    if (x < x_min || y < y_min) return false;
    i = static_cast<int>((x - x_min) / cell_m);
    j = static_cast<int>((y - y_min) / cell_m);
    // Points exactly on the max edge fold into the last cell.
    if (i == height() && x <= x_max) i = height() - 1;
    if (j == width() && y <= y_max) j = width() - 1;
    return i >= 0 && i < height() && j >= 0 && j < width();
  }

  Vec2 cell_center(int i, int j) const {
    return {x_min + (i + 0.5) * cell_m, y_min + (j + 0.5) * cell_m};
  }

  bool operator==(const GridSpec& o) const {
    return x_min == o.x_min && x_max == o.x_max && y_min == o.y_min &&
           y_max == o.y_max && cell_m == o.cell_m &&
           moment_channels == o.moment_channels;
  }
};

enum BevChannel : int {
  kChOccupancy = 0,
  kChLogCount = 1,
  kChMaxZ = 2,
  kChMeanZ = 3,
  kChMeanIntensity = 4,
  // Present only with moment_channels: offsets of the in-cell centroid from
  // the cell center and the central second moments of the in-cell points.
  // Central moments quantize well (their range stays sub-cell even when the
  // centroid sits off-center); raw moments would lose the thin-face signal
  // to cancellation after coarse quantization.
  kChMeanDx = 5,
  kChMeanDy = 6,
  kChVarXx = 7,
  kChVarYy = 8,
  kChVarXy = 9,
};

struct BevFeatureMap {
  GridSpec grid;
  std::string frame_id;
  std::vector<float> data;  // row-major (i, j, c)

  BevFeatureMap() = default;
  explicit BevFeatureMap(const GridSpec& g, std::string frame = "")
      : grid(g), frame_id(std::move(frame)) {
    grid.validate();
    data.assign(static_cast<std::size_t>(g.height()) * g.width() * g.channels(),
                0.0f);
  }

  std::size_t index(int i, int j, int c) const {
    return (static_cast<std::size_t>(i) * grid.width() + j) * grid.channels() +
           c;
  }
  float at(int i, int j, int c) const { return data[index(i, j, c)]; }
  float& at(int i, int j, int c) { return data[index(i, j, c)]; }

  std::size_t byte_size() const { return data.size() * sizeof(float); }

  bool same_shape(const BevFeatureMap& o) const {
    return grid == o.grid && data.size() == o.data.size();
  }
};

// Bins a cloud (already expressed in the grid's reference frame) into the
// grid. Channels: occupancy flag, log1p(point count), max z, mean z, mean
// intensity, and optionally centroid offsets plus central second moments.
inline BevFeatureMap extract_bev_features(const PointCloud& cloud,
                                          const GridSpec& grid) {
  grid.validate();
  BevFeatureMap map(grid, cloud.frame_id);
  const int h = grid.height(), w = grid.width();
  const std::size_t ncell = static_cast<std::size_t>(h) * w;

  std::vector<double> n(ncell, 0.0), sum_z(ncell, 0.0), sum_i(ncell, 0.0);
  std::vector<double> max_z(ncell, -std::numeric_limits<double>::infinity());
  std::vector<double> nm, sum_dx, sum_dy, sum_dxx, sum_dyy, sum_dxy;
  if (grid.moment_channels) {
    nm.assign(ncell, 0.0);
    sum_dx.assign(ncell, 0.0);
    sum_dy.assign(ncell, 0.0);
    sum_dxx.assign(ncell, 0.0);
    sum_dyy.assign(ncell, 0.0);
    sum_dxy.assign(ncell, 0.0);
  }

  for (const auto& p : cloud.points) {
    int i, j;
    if (!grid.cell_of(p.x, p.y, i, j)) continue;
    const std::size_t k = static_cast<std::size_t>(i) * w + j;
    n[k] += 1.0;
    sum_z[k] += p.z;
    sum_i[k] += p.intensity;
    max_z[k] = std::max(max_z[k], p.z);
  }

  if (grid.moment_channels) {
    // Moments describe the horizontal spread of side-wall returns only.
    // Top-face returns trail inward from a wall across the whole footprint,
    // and folding them in skews the per-cell spread well past the wall
    // line. Cells seen mostly over the top of an occluder keep everything.
    auto accumulate = [&](const Vec3& p, int i, int j) {
      const std::size_t k = static_cast<std::size_t>(i) * w + j;
      const Vec2 c = grid.cell_center(i, j);
      const double dx = p.x - c.x, dy = p.y - c.y;
      nm[k] += 1.0;
      sum_dx[k] += dx;
      sum_dy[k] += dy;
      sum_dxx[k] += dx * dx;
      sum_dyy[k] += dy * dy;
      sum_dxy[k] += dx * dy;
    };
    for (const auto& p : cloud.points) {
      int i, j;
      if (!grid.cell_of(p.x, p.y, i, j)) continue;
      const std::size_t k = static_cast<std::size_t>(i) * w + j;
      if (p.z <= max_z[k] - 0.3) accumulate({p.x, p.y, p.z}, i, j);
    }
    std::vector<char> redo(ncell, 0);
    bool any_redo = false;
    for (std::size_t k = 0; k < ncell; ++k) {
      if (n[k] > nm[k] && nm[k] < 3.0) {
        redo[k] = 1;
        any_redo = true;
        nm[k] = sum_dx[k] = sum_dy[k] = 0.0;
        sum_dxx[k] = sum_dyy[k] = sum_dxy[k] = 0.0;
      }
    }
    if (any_redo) {
      for (const auto& p : cloud.points) {
        int i, j;
        if (!grid.cell_of(p.x, p.y, i, j)) continue;
        if (redo[static_cast<std::size_t>(i) * w + j])
          accumulate({p.x, p.y, p.z}, i, j);
      }
    }
  }

  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * w + j;
      if (n[k] <= 0.0) continue;
      map.at(i, j, kChOccupancy) = 1.0f;
      map.at(i, j, kChLogCount) = static_cast<float>(std::log1p(n[k]));
      map.at(i, j, kChMaxZ) = static_cast<float>(max_z[k]);
      map.at(i, j, kChMeanZ) = static_cast<float>(sum_z[k] / n[k]);
      map.at(i, j, kChMeanIntensity) = static_cast<float>(sum_i[k] / n[k]);
      if (grid.moment_channels) {
        const double mx = sum_dx[k] / nm[k], my = sum_dy[k] / nm[k];
        map.at(i, j, kChMeanDx) = static_cast<float>(mx);
        map.at(i, j, kChMeanDy) = static_cast<float>(my);
        map.at(i, j, kChVarXx) =
            static_cast<float>(std::max(0.0, sum_dxx[k] / nm[k] - mx * mx));
        map.at(i, j, kChVarYy) =
            static_cast<float>(std::max(0.0, sum_dyy[k] / nm[k] - my * my));
        map.at(i, j, kChVarXy) =
            static_cast<float>(sum_dxy[k] / nm[k] - mx * my);
      }
    }
  }
  return map;
}

}  // namespace coopsim
